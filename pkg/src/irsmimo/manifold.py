"""Riemannian conjugate-gradient minimization over two manifolds: complex
matrices of fixed rank r (factored as u @ diag(s) @ v^H) and the complex
circle (vectors with unit-modulus entries).

Gradient convention: callbacks return the conjugate Wirtinger gradient
J = df/d(conj(X)), so the directional derivative of the real cost along a
tangent t is 2 * Re<J, t>. The Riemannian gradient is the tangent
projection of J and line-search slopes carry the factor 2.
"""

from dataclasses import dataclass, field

import numpy as np

from .numerics import truncated_svd


class DegenerateStep(Exception):
    """Retraction left the manifold (rank drop / zero entry); halve the step."""


@dataclass
class FixedRankPoint:
    """Rank-r matrix in factored form u @ diag(s) @ v^H.

    u (n, r) and v (m, r) have orthonormal columns; s holds r positive,
    non-increasing singular values.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray
    _dense: np.ndarray | None = field(default=None, repr=False)

    @property
    def r(self) -> int:
        return len(self.s)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.u.shape[0], self.v.shape[0])

    @property
    def dense(self) -> np.ndarray:
        if self._dense is None:
            self._dense = (self.u * self.s) @ self.v.conj().T
        return self._dense

    def validate(self, tol: float = 1e-10) -> None:
        r = self.r
        if not np.all(self.s > 0):
            raise ValueError("singular values must be positive")
        if np.any(np.diff(self.s) > tol):
            raise ValueError("singular values must be non-increasing")
        for q, name in ((self.u, "u"), (self.v, "v")):
            err = np.abs(q.conj().T @ q - np.eye(r)).max()
            if err > tol:
                raise ValueError(f"{name} columns not orthonormal ({err:.2e})")


@dataclass
class TangentVector:
    """Tangent vector at a FixedRankPoint in factored form.

    Embeds as u @ m_core @ v^H + u_p @ v^H + u @ v_p^H with u_p^H u = 0
    and v_p^H v = 0, so factored inner products need no cross terms.
    """

    m_core: np.ndarray         # (r, r)
    u_p: np.ndarray            # (n, r)
    v_p: np.ndarray            # (m, r)
    anchor: FixedRankPoint

    def embed(self) -> np.ndarray:
        x = self.anchor
        return (x.u @ self.m_core + self.u_p) @ x.v.conj().T + x.u @ self.v_p.conj().T

    def __add__(self, other: "TangentVector") -> "TangentVector":
        if other.anchor is not self.anchor:
            raise ValueError("cannot add tangent vectors at different points")
        return TangentVector(self.m_core + other.m_core, self.u_p + other.u_p,
                             self.v_p + other.v_p, self.anchor)

    def __mul__(self, c: float) -> "TangentVector":
        return TangentVector(c * self.m_core, c * self.u_p, c * self.v_p,
                             self.anchor)

    __rmul__ = __mul__

    def __neg__(self) -> "TangentVector":
        return self * -1.0


@dataclass(frozen=True)
class CirclePoint:
    """Vector with unit-modulus entries."""

    v: np.ndarray

    def __post_init__(self):
        if np.abs(np.abs(self.v) - 1.0).max() > 1e-9:
            raise ValueError("entries must have unit modulus")

    @property
    def n(self) -> int:
        return len(self.v)


@dataclass(frozen=True)
class CgOptions:
    """Conjugate-gradient settings (Armijo backtracking line search)."""

    epsilon: float = 1e-3
    max_iters: int = 200
    contraction: float = 0.5
    sufficient_decrease: float = 1e-4
    initial_step: float = 1.0
    max_backtracks: int = 50

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.contraction < 1.0:
            raise ValueError("contraction must lie in (0, 1)")
        if not 0.0 < self.sufficient_decrease <= 0.5:
            raise ValueError("sufficient_decrease must lie in (0, 0.5]")


@dataclass
class CgResult:
    """Final iterate, objective trace (cost at x0 first), and diagnostics."""

    x: object
    trace: list[float]
    stalled: bool
    iters: int


def project_tangent(x: FixedRankPoint, j: np.ndarray) -> TangentVector:
    """Orthogonal projection of an ambient matrix onto the tangent space:
    m_core = u^H j v, u_p = (I - u u^H) j v, v_p = (I - v v^H) j^H u."""
    if j.shape != x.shape:
        raise ValueError(f"ambient shape {j.shape} does not match {x.shape}")
    jv = j @ x.v
    jhu = j.conj().T @ x.u
    m_core = x.u.conj().T @ jv
    u_p = jv - x.u @ m_core
    v_p = jhu - x.v @ m_core.conj().T
    return TangentVector(m_core, u_p, v_p, x)


def riemannian_grad(x: FixedRankPoint, egrad: np.ndarray) -> TangentVector:
    """Tangent projection of the conjugate Euclidean gradient."""
    return project_tangent(x, egrad)


def transport(d_prev: TangentVector, x_new: FixedRankPoint) -> TangentVector:
    """Vector transport by projection onto the tangent space at x_new."""
    if x_new is d_prev.anchor:
        return d_prev
    return project_tangent(x_new, d_prev.embed())


def retract(x: FixedRankPoint, d: TangentVector, step: float) -> FixedRankPoint:
    """Best rank-r approximation of x.dense + step * d.embed().

    Computed from the factors: QR of u_p and v_p extends the bases, an SVD
    of the 2r x 2r core supplies the new singular values.

    Raises:
        DegenerateStep: the stepped matrix has numerical rank below r
            (smallest singular value <= 1e-12 * largest).
    """
    if step < 0:
        raise ValueError("step must be non-negative")
    if step == 0.0:
        return x
    r = x.r
    q_u, r_u = np.linalg.qr(step * d.u_p)
    q_v, r_v = np.linalg.qr(step * d.v_p)
    core = np.zeros((2 * r, 2 * r), dtype=complex)
    core[:r, :r] = np.diag(x.s) + step * d.m_core
    core[:r, r:] = r_v.conj().T
    core[r:, :r] = r_u
    w, sig, zh = np.linalg.svd(core)
    if sig[r - 1] <= 1e-12 * sig[0]:
        raise DegenerateStep(f"rank drop: sigma_r={sig[r - 1]:.3e}")
    u_new = np.hstack([x.u, q_u]) @ w[:, :r]
    v_new = np.hstack([x.v, q_v]) @ zh[:r].conj().T
    return FixedRankPoint(u_new, sig[:r], v_new)


def circle_project(v: CirclePoint, egrad: np.ndarray) -> np.ndarray:
    """Tangent projection t = egrad - Re(egrad * conj(v)) * v."""
    if egrad.shape != v.v.shape:
        raise ValueError("shape mismatch")
    return egrad - np.real(egrad * v.v.conj()) * v.v


def circle_retract(v: CirclePoint, t: np.ndarray, step: float) -> CirclePoint:
    """Entrywise normalization of v + step * t back onto the circle.

    Raises:
        DegenerateStep: an entry of v + step * t vanishes.
    """
    if step == 0.0:
        return v
    w = v.v + step * t
    mag = np.abs(w)
    if np.any(mag < 1e-14):
        raise DegenerateStep("entry collapsed to zero")
    return CirclePoint(w / mag)


class FixedRankManifold:
    """Manifold-ops adapter used by cg_minimize."""

    project = staticmethod(project_tangent)
    retract = staticmethod(retract)

    @staticmethod
    def transport(x_new: FixedRankPoint, t: TangentVector) -> TangentVector:
        return transport(t, x_new)

    @staticmethod
    def inner(x: FixedRankPoint, t1: TangentVector, t2: TangentVector) -> float:
        # u_p/v_p blocks are orthogonal to the u/v blocks, so the embedded
        # inner product splits over the factors.
        return float(np.sum(t1.m_core.conj() * t2.m_core).real
                     + np.sum(t1.u_p.conj() * t2.u_p).real
                     + np.sum(t1.v_p.conj() * t2.v_p).real)


class CircleManifold:
    """Manifold-ops adapter used by cg_minimize."""

    project = staticmethod(circle_project)
    retract = staticmethod(circle_retract)

    @staticmethod
    def transport(x_new: CirclePoint, t: np.ndarray) -> np.ndarray:
        return circle_project(x_new, t)

    @staticmethod
    def inner(x: CirclePoint, t1: np.ndarray, t2: np.ndarray) -> float:
        return float(np.vdot(t1, t2).real)


def _line_search(manifold, cost, x, f0, d, slope, step0, opts):
    """Armijo backtracking; returns (x_new, f_new, step) or None."""
    step = step0
    for _ in range(opts.max_backtracks):
        try:
            x_new = manifold.retract(x, d, step)
        except DegenerateStep:
            step *= opts.contraction
            continue
        f_new = cost(x_new)
        if f_new <= f0 + opts.sufficient_decrease * step * slope:
            return x_new, f_new, step
        step *= opts.contraction
    return None


def cg_minimize(manifold, cost, egrad, x0, opts: CgOptions) -> CgResult:
    """Riemannian conjugate gradient with Polak-Ribiere+ directions.

    Args:
        manifold: ops object with project/retract/transport/inner.
        cost: point -> real objective value.
        egrad: point -> conjugate Euclidean gradient (ambient array).
        x0: starting point on the manifold.
        opts: line-search and termination settings.

    Returns:
        CgResult; trace[0] is cost(x0), trace is non-increasing. Stops when
        the per-iteration decrease drops to opts.epsilon or below, the
        gradient vanishes, or max_iters is reached. A failed line search
        retries along steepest descent once, then sets stalled.
    """
    x = x0
    f = float(cost(x))
    if not np.isfinite(f):
        raise ValueError("cost not finite at the starting point")
    g = manifold.project(x, egrad(x))
    d = -g
    trace = [f]
    step_init = opts.initial_step
    stalled = False
    iters = 0

    for iters in range(1, opts.max_iters + 1):
        gnorm2 = manifold.inner(x, g, g)
        if gnorm2 <= 1e-24:
            iters -= 1
            break
        # True directional derivative is twice the Riemannian inner product
        # (Wirtinger conjugate-gradient convention).
        slope = 2.0 * manifold.inner(x, g, d)
        if slope >= 0.0:
            d = -g
            slope = -2.0 * gnorm2
        hit = _line_search(manifold, cost, x, f, d, slope, step_init, opts)
        if hit is None and manifold.inner(x, d + g, d + g) > 0:
            d = -g
            hit = _line_search(manifold, cost, x, f, d, -2.0 * gnorm2,
                               step_init, opts)
        if hit is None:
            stalled = True
            break
        x_new, f_new, step = hit
        g_new = manifold.project(x_new, egrad(x_new))
        g_old_t = manifold.transport(x_new, g)
        eta = max(0.0, manifold.inner(x_new, g_new, g_new + (-1.0) * g_old_t)
                  / gnorm2)
        d = -g_new + eta * manifold.transport(x_new, d)
        decrease = f - f_new
        x, f, g = x_new, f_new, g_new
        trace.append(f)
        step_init = min(opts.initial_step, 2.0 * step)
        if decrease <= opts.epsilon:
            break

    return CgResult(x, trace, stalled, iters)


def random_fixed_rank(n: int, m: int, r: int,
                      rng: np.random.Generator) -> FixedRankPoint:
    """Random rank-r point: product of two Gaussian factors, re-factored by
    a truncated SVD."""
    a = (rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r)))
    b = (rng.standard_normal((r, m)) + 1j * rng.standard_normal((r, m)))
    u, s, v = truncated_svd(a @ b / np.sqrt(2.0 * n), r)
    return FixedRankPoint(u, s, v)


def from_dense(a: np.ndarray, r: int) -> FixedRankPoint:
    """Best rank-r point approximating a dense matrix."""
    u, s, v = truncated_svd(a, r)
    if s[r - 1] <= 1e-12 * s[0]:
        raise ValueError(f"matrix has numerical rank below {r}")
    return FixedRankPoint(u, s, v)
