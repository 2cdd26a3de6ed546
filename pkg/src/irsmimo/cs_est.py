"""Three-stage greedy (OMP) estimator of the cascaded channel h_c.

Stage 1 recovers the UE departure atoms from the first t1 slots, during
which the reflection vector is held fixed so the slots share one effective
channel. Stage 2 recovers the BS arrival atoms from all slots. Stage 3
solves a single sparse LS problem for the cascaded gains on the IRS grid
and reassembles

    h_c_hat = kron(conj(a_ue_bar), a_bs_bar) @ lam_mat @ a_i.T

All dictionary/gain scale factors are absorbed by the least-squares refits,
so only atom identities matter in stages 1-2.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .channel import Dictionaries, PilotBlock
from .numerics import mat

GRAM_COND_LIMIT = 1e12


@dataclass
class FlopCounter:
    """Accumulates 8*m*k*n per counted (m,k)x(k,n) complex matrix product."""

    total: float = 0.0

    def add(self, m: int, k: int, n: int) -> None:
        self.total += 8.0 * m * k * n

    def mm(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        n = b.shape[1] if b.ndim == 2 else 1
        self.add(a.shape[0], a.shape[1], n)
        return a @ b


@dataclass(frozen=True)
class CsEstConfig:
    """Protocol and sparsity settings.

    t1 of None resolves to ceil(t/4) at run time. Grid resolutions travel
    with the Dictionaries object. max_sense_cols bounds the stage-3 sensing
    matrix width (g_i * p_hat * q_hat columns are materialized densely).
    """

    p_hat: int = 3
    q_hat: int = 3
    t1: int | None = None
    max_sense_cols: int = 100_000

    def __post_init__(self):
        if self.p_hat < 1 or self.q_hat < 1:
            raise ValueError("assumed path counts must be >= 1")
        if self.t1 is not None and self.t1 < 1:
            raise ValueError("t1 must be >= 1")


@dataclass
class OmpResult:
    """Greedy selection output: support order, final LS coefficients, and
    the residual Frobenius-norm trace (observation norm first)."""

    support: list[int]
    coeffs: np.ndarray
    res_trace: list[float]
    residual: np.ndarray


@dataclass
class CsEstResult:
    """Selected atoms, sparse gain vector, reconstruction, and run metrics."""

    a_ue_bar: np.ndarray
    a_bs_bar: np.ndarray
    lam: np.ndarray
    h_c_hat: np.ndarray
    support_ue: list[int]
    support_bs: list[int]
    support_gain: list[int]
    stage_ms: dict[str, float] = field(default_factory=dict)
    flops: dict[str, float] = field(default_factory=dict)


def omp_mmv(theta: np.ndarray, obs: np.ndarray, k: int,
            counter: FlopCounter | None = None) -> OmpResult:
    """Orthogonal matching pursuit with multiple measurement vectors.

    Each iteration correlates all atoms with the residual, picks the row
    of psi = theta^H res with the largest energy (ties to the lowest
    index), then refits all selected atoms against the original
    observation by least squares.

    Raises:
        np.linalg.LinAlgError: selected atoms are numerically collinear
            (Gram condition number above GRAM_COND_LIMIT).
    """
    if obs.ndim == 1:
        obs = obs[:, None]
    if theta.shape[0] != obs.shape[0]:
        raise ValueError("theta and obs row counts differ")
    if not 1 <= k <= theta.shape[1]:
        raise ValueError(f"k={k} outside [1, {theta.shape[1]}]")
    cnt = counter if counter is not None else FlopCounter()

    support: list[int] = []
    res = obs
    res_trace = [float(np.linalg.norm(obs))]
    coeffs = np.zeros((0, obs.shape[1]), dtype=complex)
    for _ in range(k):
        psi = cnt.mm(theta.conj().T, res)
        metric = np.sum(np.abs(psi) ** 2, axis=1)
        metric[support] = -1.0
        support.append(int(np.argmax(metric)))
        sel = theta[:, support]
        gram = cnt.mm(sel.conj().T, sel)
        if np.linalg.cond(gram) > GRAM_COND_LIMIT:
            raise np.linalg.LinAlgError(
                f"selected atoms nearly collinear (support {support})")
        coeffs = np.linalg.solve(gram, cnt.mm(sel.conj().T, obs))
        res = obs - cnt.mm(sel, coeffs)
        res_trace.append(float(np.linalg.norm(res)))
    return OmpResult(support, coeffs, res_trace, res)


def stage1_ue_aods(pilots: PilotBlock, dicts: Dictionaries, cfg: CsEstConfig,
                   counter: FlopCounter | None = None
                   ) -> tuple[np.ndarray, OmpResult]:
    """UE departure-atom selection from the fixed-reflection slots.

    The first t1 received blocks satisfy r_t^H = s_t^H a_ue gamma + noise
    for one common row-sparse gamma, so omp_mmv on (s^H a_ue, r^H) finds
    the q_hat active columns of a_ue.
    """
    t1 = _resolve_t1(cfg, pilots.t)
    cnt = counter if counter is not None else FlopCounter()
    s1 = pilots.s[:, :t1]
    theta = cnt.mm(s1.conj().T, dicts.a_ue)
    res = omp_mmv(theta, pilots.r[:, :t1].conj().T, cfg.q_hat, cnt)
    return dicts.a_ue[:, res.support], res


def stage2_bs_aoas(pilots: PilotBlock, dicts: Dictionaries, cfg: CsEstConfig,
                   counter: FlopCounter | None = None
                   ) -> tuple[np.ndarray, OmpResult]:
    """BS arrival-atom selection: r = a_bs gamma + noise over all slots."""
    res = omp_mmv(dicts.a_bs, pilots.r, cfg.p_hat, counter)
    return dicts.a_bs[:, res.support], res


def permutation_l(dicts: Dictionaries, j: int) -> np.ndarray:
    """Permutation matrix of the row-rearrangement identity

        a_i.T * (row broadcast of conj(sqrt(m) * a_j)) == l_j @ a_i.T

    where a_j is column j of the IRS dictionary and * is entrywise. Works
    because the frequency grids are closed under subtraction modulo 2,
    which needs both per-axis resolutions to be even.
    """
    g_y, g_z = len(dicts.grid_y), len(dicts.grid_z)
    if g_y % 2 or g_z % 2:
        raise ValueError("permutation identity needs even grid resolutions")
    if not 0 <= j < g_y * g_z:
        raise ValueError(f"atom index {j} out of range")
    j_y, j_z = divmod(j, g_z)
    i_y, i_z = np.divmod(np.arange(g_y * g_z), g_z)
    sig_y = (i_y - j_y + g_y // 2) % g_y
    sig_z = (i_z - j_z + g_z // 2) % g_z
    l_j = np.zeros((g_y * g_z, g_y * g_z))
    l_j[np.arange(g_y * g_z), sig_y * g_z + sig_z] = 1.0
    return l_j


def stage3_gains(pilots: PilotBlock, a_ue_bar: np.ndarray,
                 a_bs_bar: np.ndarray, dicts: Dictionaries, cfg: CsEstConfig,
                 counter: FlopCounter | None = None
                 ) -> tuple[np.ndarray, np.ndarray, OmpResult]:
    """Sparse recovery of the cascaded gains on the IRS grid.

    Slot t contributes r_t = (kron(c_t.T, b_t)) lam with c_t = a_i.T v_t
    and b_t = kron(s_t.T conj(a_ue_bar), a_bs_bar); the slots are stacked
    into one tall system solved by omp_mmv with k = p_hat * q_hat.

    Returns (lam, h_c_hat, omp_result).

    Raises:
        ValueError: sensing matrix wider than cfg.max_sense_cols.
    """
    cnt = counter if counter is not None else FlopCounter()
    n_bs, t = pilots.r.shape
    g_i = dicts.a_i.shape[1]
    kk = a_ue_bar.shape[1] * a_bs_bar.shape[1]
    n_cols = g_i * kk
    if n_cols > cfg.max_sense_cols:
        raise ValueError(
            f"stage-3 sensing matrix has {n_cols} columns, above the "
            f"max_sense_cols budget {cfg.max_sense_cols}")

    c_all = cnt.mm(dicts.a_i.T, pilots.v)                      # (g_i, t)
    su = cnt.mm(pilots.s.T, a_ue_bar.conj())                   # (t, q_hat)
    theta = np.empty((n_bs * t, n_cols), dtype=complex)
    for ti in range(t):
        b_t = np.kron(su[ti], a_bs_bar)                        # (n_bs, kk)
        theta[ti * n_bs:(ti + 1) * n_bs] = np.kron(c_all[:, ti], b_t)
        cnt.add(n_bs, 1, n_cols)
    obs = pilots.r.reshape(-1, order="F")

    res = omp_mmv(theta, obs, kk, cnt)
    lam = np.zeros(n_cols, dtype=complex)
    lam[res.support] = res.coeffs[:, 0]
    lam_mat = mat(lam, kk, g_i)
    h_c_hat = cnt.mm(cnt.mm(np.kron(a_ue_bar.conj(), a_bs_bar), lam_mat),
                     dicts.a_i.T)
    return lam, h_c_hat, res


def cs_est(pilots: PilotBlock, dicts: Dictionaries,
           cfg: CsEstConfig) -> CsEstResult:
    """Full three-stage pipeline with per-stage timings and flop counts."""
    counters = {name: FlopCounter() for name in ("stage1", "stage2", "stage3")}
    stage_ms: dict[str, float] = {}

    tic = time.perf_counter()
    a_ue_bar, omp_ue = stage1_ue_aods(pilots, dicts, cfg, counters["stage1"])
    stage_ms["stage1"] = 1e3 * (time.perf_counter() - tic)

    tic = time.perf_counter()
    a_bs_bar, omp_bs = stage2_bs_aoas(pilots, dicts, cfg, counters["stage2"])
    stage_ms["stage2"] = 1e3 * (time.perf_counter() - tic)

    tic = time.perf_counter()
    lam, h_c_hat, omp_gain = stage3_gains(pilots, a_ue_bar, a_bs_bar, dicts,
                                          cfg, counters["stage3"])
    stage_ms["stage3"] = 1e3 * (time.perf_counter() - tic)

    flops = {name: c.total for name, c in counters.items()}
    flops["total"] = sum(flops.values())
    return CsEstResult(a_ue_bar, a_bs_bar, lam, h_c_hat,
                       omp_ue.support, omp_bs.support, omp_gain.support,
                       stage_ms, flops)


def _resolve_t1(cfg: CsEstConfig, t: int) -> int:
    t1 = int(np.ceil(t / 4)) if cfg.t1 is None else cfg.t1
    if not 1 <= t1 <= t:
        raise ValueError(f"t1={t1} outside [1, {t}]")
    return t1
