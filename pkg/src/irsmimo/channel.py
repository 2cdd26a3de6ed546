"""Sparse mm-wave channel synthesis, angular dictionaries, and the uplink
training observation model for an IRS-assisted BS--IRS--UE link.

The BS and UE carry half-wavelength ULAs; the IRS is an m_y-by-m_z planar
array. The BS-IRS channel g is n_bs x m with p paths, the IRS-UE channel h
is m x n_ue with q paths. Reflection vectors have unit-modulus entries.
"""

from dataclasses import dataclass, field

import numpy as np

from .numerics import khatri_rao, kron, mat, random_unit_modulus


@dataclass(frozen=True)
class SystemGeometry:
    """Array/dictionary dimensions and link distances.

    g_bs/g_ue/g_y/g_z are angular-grid resolutions; they must be at least
    the matching array size whenever dictionaries are built.
    """

    n_bs: int = 16
    n_ue: int = 8
    m_y: int = 4
    m_z: int = 4
    g_bs: int = 16
    g_ue: int = 8
    g_y: int = 4
    g_z: int = 4
    d_bi: float = 150.0
    d_iu: float = 10.0

    @property
    def m(self) -> int:
        return self.m_y * self.m_z

    @property
    def g_i(self) -> int:
        return self.g_y * self.g_z

    def __post_init__(self):
        for name in ("n_bs", "n_ue", "m_y", "m_z", "g_bs", "g_ue", "g_y", "g_z"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.d_bi <= 0 or self.d_iu <= 0:
            raise ValueError("distances must be positive")

    def unitary(self) -> "SystemGeometry":
        """Copy with grid resolutions equal to the array sizes."""
        return SystemGeometry(self.n_bs, self.n_ue, self.m_y, self.m_z,
                              self.n_bs, self.n_ue, self.m_y, self.m_z,
                              self.d_bi, self.d_iu)


@dataclass(frozen=True)
class PathSet:
    """Path gains, angles, and spatial frequencies for both hops.

    Angles are the raw draws in (0, 2pi]; the u_* arrays hold the spatial
    frequencies actually used for synthesis (snapped to the dictionary grid
    when drawn with on_grid=True, otherwise the exact trig values).
    """

    alpha: np.ndarray          # (p,) BS-IRS gains
    theta_r: np.ndarray        # (p,) BS AoA
    theta_t: np.ndarray        # (p,) IRS AoD azimuth
    phi_t: np.ndarray          # (p,) IRS AoD elevation
    beta: np.ndarray           # (q,) IRS-UE gains
    psi_r: np.ndarray          # (q,) IRS AoA azimuth
    phi_r: np.ndarray          # (q,) IRS AoA elevation
    psi_t: np.ndarray          # (q,) UE AoD
    u_bs: np.ndarray           # (p,) cos(theta_r)
    u_irs_aod: np.ndarray      # (p, 2) [sin(theta_t)sin(phi_t), cos(phi_t)]
    u_irs_aoa: np.ndarray      # (q, 2) [sin(psi_r)sin(phi_r), cos(phi_r)]
    u_ue: np.ndarray           # (q,) cos(psi_t)

    @property
    def p(self) -> int:
        return len(self.alpha)

    @property
    def q(self) -> int:
        return len(self.beta)


@dataclass
class ChannelRealization:
    """Dense channel pair plus the generating paths."""

    g: np.ndarray              # (n_bs, m)
    h: np.ndarray              # (m, n_ue)
    paths: PathSet
    _h_c: np.ndarray | None = field(default=None, repr=False)

    @property
    def h_c(self) -> np.ndarray:
        """Cascaded channel H.T (column-wise) Kronecker G, (n_bs*n_ue, m)."""
        if self._h_c is None:
            self._h_c = cascaded(self)
        return self._h_c


@dataclass(frozen=True)
class Dictionaries:
    """Angular-domain steering dictionaries with unit-norm columns."""

    a_bs: np.ndarray           # (n_bs, g_bs)
    a_ue: np.ndarray           # (n_ue, g_ue)
    a_y: np.ndarray            # (m_y, g_y)
    a_z: np.ndarray            # (m_z, g_z)
    a_i: np.ndarray            # (m_y*m_z, g_y*g_z) = kron(a_y, a_z)
    grid_bs: np.ndarray
    grid_ue: np.ndarray
    grid_y: np.ndarray
    grid_z: np.ndarray

    @property
    def unitary(self) -> bool:
        return (self.a_bs.shape[0] == self.a_bs.shape[1]
                and self.a_ue.shape[0] == self.a_ue.shape[1]
                and self.a_i.shape[0] == self.a_i.shape[1])


@dataclass(frozen=True)
class PilotBlock:
    """Uplink training block.

    Column t of s/v/r holds the pilot vector, reflection vector, and
    received vector of slot t. All reflection entries are unit modulus and
    every pilot satisfies ||s_t||^2 = p_tr.
    """

    s: np.ndarray              # (n_ue, t)
    v: np.ndarray              # (m, t)
    r: np.ndarray              # (n_bs, t)
    sigma2: float
    p_tr: float = 1.0

    @property
    def t(self) -> int:
        return self.s.shape[1]


def steering_ula(u: float, n: int) -> np.ndarray:
    """Unit-norm ULA response for spatial frequency u: entries
    exp(j*pi*k*u)/sqrt(n), k = 0..n-1."""
    return np.exp(1j * np.pi * u * np.arange(n)) / np.sqrt(n)


def steering_irs(theta: float, phi: float, m_y: int, m_z: int) -> np.ndarray:
    """Unit-norm planar-array response kron(f(sin(theta)sin(phi), m_y),
    f(cos(phi), m_z))."""
    return kron(steering_ula(np.sin(theta) * np.sin(phi), m_y),
                steering_ula(np.cos(phi), m_z))


def _steering_irs_uv(u_y: float, u_z: float, m_y: int, m_z: int) -> np.ndarray:
    """IRS response from the spatial-frequency pair directly."""
    return kron(steering_ula(u_y, m_y), steering_ula(u_z, m_z))


def pathloss(d: float) -> float:
    """Distance-dependent average path gain 10^(-6.14 - 2*log10(d))."""
    return 10.0 ** (-6.14 - 2.0 * np.log10(d))


def _grid(g: int) -> np.ndarray:
    """Uniform spatial-frequency grid over [-1, 1) with spacing 2/g."""
    return -1.0 + 2.0 * np.arange(g) / g


def _snap(u: np.ndarray, g: int) -> tuple[np.ndarray, np.ndarray]:
    """Snap frequencies to the g-point grid; returns (values, indices)."""
    idx = np.round((np.asarray(u) + 1.0) * g / 2.0).astype(int) % g
    return _grid(g)[idx], idx


def _circdist(i: np.ndarray, j: np.ndarray, g: int) -> np.ndarray:
    d = np.abs(np.asarray(i) - np.asarray(j)) % g
    return np.minimum(d, g - d)


def _min_separation(idx: np.ndarray, g: int) -> int:
    """Smallest pairwise circular index distance (g if fewer than 2)."""
    k = len(idx)
    if k < 2:
        return g
    best = g
    for a in range(k):
        for b in range(a + 1, k):
            best = min(best, int(_circdist(idx[a], idx[b], g)))
    return best


def _gains(k: int, tau: float, rng: np.random.Generator) -> np.ndarray:
    """Path 0 is LoS with variance tau, the rest NLoS with 10^-0.5 * tau."""
    var = np.full(k, 10.0 ** -0.5 * tau)
    var[0] = tau
    return np.sqrt(var / 2.0) * (rng.standard_normal(k)
                                 + 1j * rng.standard_normal(k))


def sample_paths(geom: SystemGeometry, k: int, rng: np.random.Generator,
                 on_grid: bool = False, max_tries: int = 2000) -> PathSet:
    """Draw k paths per hop with angles uniform on (0, 2pi].

    Spatial frequencies of distinct paths are kept separated so the
    synthesized channels have exact rank k: off grid any two frequencies
    of the same kind must differ by at least 1e-6; on grid the draws are
    redrawn until the snapped indices of every frequency are at least one
    orthogonality period (grid size / array size) apart, which keeps the
    corresponding atoms resolvable. IRS frequency pairs only need the
    separation on one of the two axes.

    Raises:
        ValueError: k violates the rank preconditions, or separation could
            not be met within max_tries redraws.
    """
    m = geom.m
    if k > min(geom.n_bs, m) or k > min(geom.n_ue, m):
        raise ValueError(f"k={k} exceeds min array dimension")

    def draw_scalar(n_ant: int, g: int) -> tuple[np.ndarray, np.ndarray]:
        sep = max(1, int(np.ceil(g / n_ant))) if on_grid else 1
        for _ in range(max_tries):
            ang = rng.uniform(0.0, 2.0 * np.pi, k)
            u = np.cos(ang)
            if on_grid:
                u, idx = _snap(u, g)
                if _min_separation(idx, g) >= sep:
                    return ang, u
            else:
                if k < 2 or np.min(np.abs(np.subtract.outer(u, u))
                                   [~np.eye(k, dtype=bool)]) >= 1e-6:
                    return ang, u
        raise ValueError("could not draw separated path frequencies")

    def draw_pair() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        sep_y = max(1, int(np.ceil(geom.g_y / geom.m_y))) if on_grid else 1
        sep_z = max(1, int(np.ceil(geom.g_z / geom.m_z))) if on_grid else 1
        for _ in range(max_tries):
            az = rng.uniform(0.0, 2.0 * np.pi, k)
            el = rng.uniform(0.0, 2.0 * np.pi, k)
            uy = np.sin(az) * np.sin(el)
            uz = np.cos(el)
            if on_grid:
                uy, iy = _snap(uy, geom.g_y)
                uz, iz = _snap(uz, geom.g_z)
                ok = all(_circdist(iy[a], iy[b], geom.g_y) >= sep_y
                         or _circdist(iz[a], iz[b], geom.g_z) >= sep_z
                         for a in range(k) for b in range(a + 1, k))
            else:
                ok = all(max(abs(uy[a] - uy[b]), abs(uz[a] - uz[b])) >= 1e-6
                         for a in range(k) for b in range(a + 1, k))
            if ok:
                return az, el, np.column_stack([uy, uz])
        raise ValueError("could not draw separated path frequencies")

    theta_r, u_bs = draw_scalar(geom.n_bs, geom.g_bs)
    theta_t, phi_t, u_irs_aod = draw_pair()
    psi_r, phi_r, u_irs_aoa = draw_pair()
    psi_t, u_ue = draw_scalar(geom.n_ue, geom.g_ue)

    alpha = _gains(k, pathloss(geom.d_bi), rng)
    beta = _gains(k, pathloss(geom.d_iu), rng)
    return PathSet(alpha, theta_r, theta_t, phi_t, beta, psi_r, phi_r, psi_t,
                   u_bs, u_irs_aod, u_irs_aoa, u_ue)


def synth_channels(geom: SystemGeometry, paths: PathSet) -> ChannelRealization:
    """Sum-of-paths channels

        g = sqrt(n_bs*m/p) * sum_p alpha_p a_bs(theta_r) a_irs(aod)^H
        h = sqrt(n_ue*m/q) * sum_q beta_q a_irs(aoa) a_ue(psi_t)^H
    """
    m = geom.m
    g = np.zeros((geom.n_bs, m), dtype=complex)
    for p in range(paths.p):
        a_rx = steering_ula(paths.u_bs[p], geom.n_bs)
        a_tx = _steering_irs_uv(*paths.u_irs_aod[p], geom.m_y, geom.m_z)
        g += paths.alpha[p] * np.outer(a_rx, a_tx.conj())
    g *= np.sqrt(geom.n_bs * m / paths.p)

    h = np.zeros((m, geom.n_ue), dtype=complex)
    for q in range(paths.q):
        a_rx = _steering_irs_uv(*paths.u_irs_aoa[q], geom.m_y, geom.m_z)
        a_tx = steering_ula(paths.u_ue[q], geom.n_ue)
        h += paths.beta[q] * np.outer(a_rx, a_tx.conj())
    h *= np.sqrt(geom.n_ue * m / paths.q)
    return ChannelRealization(g, h, paths)


def build_dictionaries(geom: SystemGeometry) -> Dictionaries:
    """Steering dictionaries on the uniform frequency grids; unitary (up to
    scaling exact) whenever the resolution equals the array size."""
    for res, size, name in ((geom.g_bs, geom.n_bs, "g_bs"),
                            (geom.g_ue, geom.n_ue, "g_ue"),
                            (geom.g_y, geom.m_y, "g_y"),
                            (geom.g_z, geom.m_z, "g_z")):
        if res < size:
            raise ValueError(f"{name}={res} below array size {size}")

    def bank(n: int, g: int) -> np.ndarray:
        return np.column_stack([steering_ula(u, n) for u in _grid(g)])

    a_bs = bank(geom.n_bs, geom.g_bs)
    a_ue = bank(geom.n_ue, geom.g_ue)
    a_y = bank(geom.m_y, geom.g_y)
    a_z = bank(geom.m_z, geom.g_z)
    return Dictionaries(a_bs, a_ue, a_y, a_z, kron(a_y, a_z),
                        _grid(geom.g_bs), _grid(geom.g_ue),
                        _grid(geom.g_y), _grid(geom.g_z))


def angular_coefficients(ch: ChannelRealization,
                         dicts: Dictionaries) -> tuple[np.ndarray, np.ndarray]:
    """Angular coefficient matrices (a_bs^H g a_i, a_i^H h a_ue).

    Requires unitary dictionaries (resolution equal to array size) so the
    transform is exactly invertible.
    """
    if not dicts.unitary:
        raise ValueError("angular_coefficients needs unitary dictionaries")
    lambda_g = dicts.a_bs.conj().T @ ch.g @ dicts.a_i
    lambda_h = dicts.a_i.conj().T @ ch.h @ dicts.a_ue
    return lambda_g, lambda_h


def cascaded(ch: ChannelRealization) -> np.ndarray:
    """Cascaded channel khatri_rao(h.T, g) of shape (n_bs*n_ue, m)."""
    return khatri_rao(ch.h.T, ch.g)


def effective_channel(h_c: np.ndarray, v: np.ndarray,
                      geom: SystemGeometry) -> np.ndarray:
    """End-to-end (n_ue, n_bs) channel for reflection vector v.

    Equals h^H diag(v) g^H; computed from the cascaded channel as
    mat(conj(h_c) @ v, n_bs, n_ue).T.
    """
    if h_c.shape != (geom.n_bs * geom.n_ue, geom.m):
        raise ValueError(f"h_c shape {h_c.shape} inconsistent with geometry")
    if v.shape[0] != geom.m:
        raise ValueError("reflection vector length mismatch")
    return mat(h_c.conj() @ v, geom.n_bs, geom.n_ue).T


def make_pilots(geom: SystemGeometry, t: int, rng: np.random.Generator,
                p_tr: float = 1.0, hold_v: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Random training pilots: unit-modulus entries scaled so ||s_t||^2=p_tr,
    and unit-modulus reflection vectors. The first hold_v slots share the
    reflection vector of slot 0 (the fixed-reflection training protocol).
    """
    s = np.column_stack([random_unit_modulus(geom.n_ue, rng) for _ in range(t)])
    s *= np.sqrt(p_tr / geom.n_ue)
    v = np.column_stack([random_unit_modulus(geom.m, rng) for _ in range(t)])
    for j in range(1, min(hold_v, t)):
        v[:, j] = v[:, 0]
    return s, v


def simulate_uplink(ch: ChannelRealization, s: np.ndarray, v: np.ndarray,
                    sigma2: float, rng: np.random.Generator,
                    p_tr: float = 1.0) -> PilotBlock:
    """Received training block r_t = g diag(v_t) h s_t + z_t with
    z_t ~ CN(0, sigma2 I); sigma2=0 gives the exact noiseless model."""
    if s.shape[1] != v.shape[1]:
        raise ValueError("pilot and reflection slot counts differ")
    r = ch.g @ (v * (ch.h @ s))
    if sigma2 > 0:
        n_bs, t = r.shape
        r = r + np.sqrt(sigma2 / 2.0) * (rng.standard_normal((n_bs, t))
                                         + 1j * rng.standard_normal((n_bs, t)))
    return PilotBlock(s, v, r, sigma2, p_tr)
