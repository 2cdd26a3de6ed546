"""Seeded Monte-Carlo harness: experiment configuration, per-trial
pipeline (channel, training, estimation, beamforming, metrics), sweep
execution, and CSV serialization.

Determinism contract: a (config, master_seed) pair yields byte-identical
CSV output regardless of thread count or completion order. Every trial
derives its generators from SeedSequence(master_seed, spawn_key=(point,
seed)) and splits them per pipeline phase, so paired-seed comparisons
across algorithms see identical channels, pilots, and initial reflection
vectors. Wall-clock columns are written as 0.0 unless timings=true.
"""

import concurrent.futures
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from .channel import (SystemGeometry, build_dictionaries, effective_channel,
                      make_pilots, sample_paths, simulate_uplink,
                      synth_channels)
from .cs_est import CsEstConfig, cs_est
from .mo_est import MoEstConfig, mo_est
from .numerics import khatri_rao
from .wmmse import DownlinkScenario, alt_wmmse, spectral_efficiency

CSV_HEADER = "seed,algorithm,T,pnr_db,snr_db,nmse,se_bits_s_hz,outer_iters,wall_ms"
ALGORITHMS = ("mo_est", "cs_est", "perfect_csi", "random_phase_baseline")
SWEEP_AXES = ("T", "PNR", "SNR", "K_hat")
_ESTIMATORS = ("mo_est", "cs_est")


class ConfigError(ValueError):
    """Invalid configuration file or field value."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment description; every field is a config-file key."""

    n_bs: int = 16
    n_ue: int = 8
    m_y: int = 4
    m_z: int = 4
    g_bs: int = 64
    g_ue: int = 64
    g_y: int = 16
    g_z: int = 16
    d_bi: float = 150.0
    d_iu: float = 10.0
    algorithm: str = "mo_est"
    sweep_axis: str = "T"
    sweep_values: tuple[float, ...] = (100.0,)
    trials: int = 10
    t: int = 100
    t1: int | None = None
    pnr_db: float = 0.0
    snr_db: float = 10.0
    t_tot: int = 2000
    k_true: int = 3
    k_hat: int | None = None
    p_tr: float = 1.0
    n_s: int = 3
    on_grid: bool = False
    master_seed: int = 0
    threads: int = 1
    timings: bool = False
    mu_g: float | None = None
    mu_h: float | None = None
    eps_inner: float = 1e-3
    eps_outer: float = 1e-3
    eps3: float = 1e-3

    def geometry(self) -> SystemGeometry:
        return SystemGeometry(self.n_bs, self.n_ue, self.m_y, self.m_z,
                              self.g_bs, self.g_ue, self.g_y, self.g_z,
                              self.d_bi, self.d_iu)

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep_axis {self.sweep_axis!r}")
        if len(self.sweep_values) == 0:
            raise ConfigError("sweep_values must be non-empty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not 0 <= self.t < self.t_tot:
            raise ConfigError("need 0 <= t < t_tot")
        if self.algorithm in _ESTIMATORS and self.sweep_axis != "T" \
                and self.t < 1:
            raise ConfigError("estimators need t >= 1")
        if self.k_true < 1:
            raise ConfigError("k_true must be >= 1")
        try:
            self.geometry()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class TrialRecord:
    """One CSV row; float fields are nan when the trial failed."""

    seed: int
    algorithm: str
    t: int
    pnr_db: float
    snr_db: float
    nmse: float
    se_bits_s_hz: float
    outer_iters: int
    wall_ms: float

    def to_csv_row(self) -> str:
        return ",".join([
            str(int(self.seed)), self.algorithm, str(int(self.t)),
            str(float(self.pnr_db)), str(float(self.snr_db)),
            str(float(self.nmse)), str(float(self.se_bits_s_hz)),
            str(int(self.outer_iters)), str(float(self.wall_ms)),
        ])


_BOOL_WORDS = {"true": True, "1": True, "yes": True,
               "false": False, "0": False, "no": False}


def _coerce(name: str, kind, raw: str):
    raw = raw.strip()
    if kind is bool:
        if raw.lower() not in _BOOL_WORDS:
            raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
        return _BOOL_WORDS[raw.lower()]
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    if kind is str:
        return raw
    raise ConfigError(f"{name}: unsupported field type")


def parse_config(text: str) -> ExperimentConfig:
    """Parse flat `key = value` lines (# starts a comment) into a config.

    Raises:
        ConfigError: unknown key, malformed line or value, or failed
            validation of the resulting configuration.
    """
    kinds = {f.name: f.type for f in fields(ExperimentConfig)}
    values = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key = value")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in kinds:
            raise ConfigError(f"line {ln}: unknown key {key!r}")
        try:
            if key == "sweep_values":
                values[key] = tuple(float(v) for v in raw.split(","))
            elif key in ("t1", "k_hat"):
                raw = raw.strip()
                values[key] = None if raw.lower() in ("none", "") else int(raw)
            elif key in ("mu_g", "mu_h"):
                raw = raw.strip()
                values[key] = None if raw.lower() in ("none", "") else float(raw)
            elif key in ("on_grid", "timings"):
                values[key] = _coerce(key, bool, raw)
            elif key in ("algorithm", "sweep_axis"):
                values[key] = raw.strip()
            else:
                base = ExperimentConfig.__dataclass_fields__[key].default
                values[key] = _coerce(key, type(base), raw)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {ln}: {exc}") from exc
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def config_text(cfg: ExperimentConfig) -> str:
    """Render a config back to the flat key = value format."""
    lines = []
    for f in fields(cfg):
        val = getattr(cfg, f.name)
        if f.name == "sweep_values":
            val = ",".join(str(v) for v in val)
        elif isinstance(val, bool):
            val = "true" if val else "false"
        lines.append(f"{f.name} = {val}")
    return "\n".join(lines) + "\n"


def pnr_to_sigma2(pnr_db: float, d_bi: float, d_iu: float,
                  p_tr: float = 1.0) -> float:
    """Noise power giving the requested pilot-to-noise ratio
    p_tr * tau_bi * tau_iu / sigma2 (tau from the path-loss law)."""
    from .channel import pathloss
    if d_bi <= 0 or d_iu <= 0:
        raise ValueError("distances must be positive")
    return p_tr * pathloss(d_bi) * pathloss(d_iu) / 10.0 ** (pnr_db / 10.0)


def nmse(h_c_true: np.ndarray, h_c_hat: np.ndarray) -> float:
    """Per-trial squared-error ratio ||true - hat||_F^2 / ||true||_F^2."""
    if h_c_true.shape != h_c_hat.shape:
        raise ValueError("shape mismatch")
    denom = float(np.linalg.norm(h_c_true) ** 2)
    if denom == 0.0:
        raise ValueError("true channel is zero")
    return float(np.linalg.norm(h_c_true - h_c_hat) ** 2) / denom


def _point_params(cfg: ExperimentConfig, point: int):
    """(t, pnr_db, snr_db, k_hat) after applying the sweep value."""
    value = cfg.sweep_values[point]
    t, pnr_db, snr_db = cfg.t, cfg.pnr_db, cfg.snr_db
    k_hat = cfg.k_true if cfg.k_hat is None else cfg.k_hat
    if cfg.sweep_axis == "T":
        t = int(value)
    elif cfg.sweep_axis == "PNR":
        pnr_db = float(value)
    elif cfg.sweep_axis == "SNR":
        snr_db = float(value)
    elif cfg.sweep_axis == "K_hat":
        k_hat = int(value)
    return t, pnr_db, snr_db, k_hat


def run_trial(cfg: ExperimentConfig, point: int, seed: int) -> TrialRecord:
    """One seeded trial of the configured pipeline.

    point indexes cfg.sweep_values and seed is the trial index; together
    with master_seed they determine every random draw. Channel, pilots,
    estimator, and beamformer initialization use separate child generators
    so algorithms can be compared pairwise on identical realizations.

    The beamformers are designed from the estimated cascaded channel, but
    the reported rate applies them to the true one. outer_iters counts
    estimator outer iterations (total greedy selections for cs_est) or,
    for the CSI-free arms, beamformer iterations.
    """
    tic = time.perf_counter()
    t, pnr_db, snr_db, k_hat = _point_params(cfg, point)
    geom = cfg.geometry()
    ss = np.random.SeedSequence(cfg.master_seed, spawn_key=(point, seed))
    rng_chan, rng_pilot, rng_est, rng_bf = [
        np.random.default_rng(child) for child in ss.spawn(4)]

    ch = synth_channels(geom, sample_paths(geom, cfg.k_true, rng_chan,
                                           on_grid=cfg.on_grid))
    sigma2 = pnr_to_sigma2(pnr_db, cfg.d_bi, cfg.d_iu, cfg.p_tr)
    sigma2_d = pnr_to_sigma2(snr_db, cfg.d_bi, cfg.d_iu, 1.0)

    if t > 0:
        t1 = int(np.ceil(t / 4)) if cfg.t1 is None else cfg.t1
        s, v = make_pilots(geom, t, rng_pilot, cfg.p_tr,
                           hold_v=t1 if cfg.algorithm == "cs_est" else 0)
        pilots = simulate_uplink(ch, s, v, sigma2, rng_pilot, cfg.p_tr)
    elif cfg.algorithm in _ESTIMATORS:
        raise ValueError("estimators need at least one training slot")

    if cfg.algorithm == "mo_est":
        dicts = build_dictionaries(geom.unitary())
        res = mo_est(pilots, dicts,
                     MoEstConfig(k_hat, k_hat, cfg.mu_g, cfg.mu_h,
                                 cfg.eps_inner, cfg.eps_outer),
                     rng_est)
        h_c_hat = khatri_rao(res.h_hat.dense.T, res.g_hat.dense)
        iters = res.iterations
    elif cfg.algorithm == "cs_est":
        dicts = build_dictionaries(geom)
        res = cs_est(pilots, dicts, CsEstConfig(k_hat, k_hat, cfg.t1))
        h_c_hat = res.h_c_hat
        iters = (len(res.support_ue) + len(res.support_bs)
                 + len(res.support_gain))
    else:
        h_c_hat = ch.h_c
        iters = -1

    scen = DownlinkScenario(geom, h_c_hat, sigma2_d, cfg.n_s, t, cfg.t_tot)
    sol = alt_wmmse(scen, rng_bf, cfg.eps3,
                    optimize_v=cfg.algorithm != "random_phase_baseline")
    if iters < 0:
        iters = sol.iterations

    scen_true = replace(scen, h_c=ch.h_c)
    h_e_true = effective_channel(ch.h_c, sol.v_d.v, geom)
    se = spectral_efficiency(h_e_true, sol.f, scen_true)
    err = 0.0 if cfg.algorithm not in _ESTIMATORS else nmse(ch.h_c, h_c_hat)
    wall = 1e3 * (time.perf_counter() - tic) if cfg.timings else 0.0
    return TrialRecord(seed, cfg.algorithm, t, pnr_db, snr_db, err, se,
                       iters, wall)


def _failed_record(cfg: ExperimentConfig, point: int, seed: int) -> TrialRecord:
    t, pnr_db, snr_db, _ = _point_params(cfg, point)
    return TrialRecord(seed, cfg.algorithm, t, pnr_db, snr_db,
                       float("nan"), float("nan"), 0, 0.0)


def sweep(cfg: ExperimentConfig) -> tuple[list[TrialRecord], int]:
    """All (point, seed) trials in deterministic order.

    Trials run on a thread pool of cfg.threads workers; output order is
    always (point-major, seed-minor) regardless of completion order.
    Failed trials become nan rows. Returns (records, failure count).
    """
    cfg.validate()
    keys = [(p, s) for p in range(len(cfg.sweep_values))
            for s in range(cfg.trials)]
    results: dict[tuple[int, int], TrialRecord] = {}
    failures = 0
    with concurrent.futures.ThreadPoolExecutor(cfg.threads) as pool:
        futures = [pool.submit(run_trial, cfg, *key) for key in keys]
        for key, fut in zip(keys, futures):
            try:
                results[key] = fut.result()
            except Exception:
                failures += 1
                results[key] = _failed_record(cfg, *key)
    return [results[key] for key in keys], failures


def to_csv(records: list[TrialRecord]) -> str:
    """CSV text with the fixed header and LF line endings."""
    return "\n".join([CSV_HEADER] + [r.to_csv_row() for r in records]) + "\n"


def parse_csv(text: str) -> list[TrialRecord]:
    """Inverse of to_csv; validates the header."""
    lines = text.strip("\n").split("\n")
    if lines[0] != CSV_HEADER:
        raise ValueError("unexpected CSV header")
    out = []
    for line in lines[1:]:
        f = line.split(",")
        out.append(TrialRecord(int(f[0]), f[1], int(f[2]), float(f[3]),
                               float(f[4]), float(f[5]), float(f[6]),
                               int(f[7]), float(f[8])))
    return out


def summarize(records: list[TrialRecord]) -> list[dict]:
    """Median/mean NMSE and SE grouped by (algorithm, t, pnr_db, snr_db),
    in first-appearance order; nan trials are excluded per group."""
    groups: dict[tuple, list[TrialRecord]] = {}
    for rec in records:
        groups.setdefault((rec.algorithm, rec.t, rec.pnr_db, rec.snr_db),
                          []).append(rec)
    out = []
    for key, recs in groups.items():
        err = np.array([r.nmse for r in recs])
        se = np.array([r.se_bits_s_hz for r in recs])
        ok = ~np.isnan(err) & ~np.isnan(se)
        out.append({
            "algorithm": key[0], "t": key[1], "pnr_db": key[2],
            "snr_db": key[3], "n": int(ok.sum()),
            "median_nmse": float(np.median(err[ok])) if ok.any() else float("nan"),
            "mean_nmse": float(np.mean(err[ok])) if ok.any() else float("nan"),
            "median_se": float(np.median(se[ok])) if ok.any() else float("nan"),
            "mean_se": float(np.mean(se[ok])) if ok.any() else float("nan"),
        })
    return out


DESK_PRESET = ExperimentConfig()

PAPER_PRESET = ExperimentConfig(
    n_bs=36, n_ue=16, m_y=6, m_z=6, trials=100, t=300,
    sweep_values=(100.0, 200.0, 300.0, 400.0, 500.0))

PRESETS = {"desk-scale": DESK_PRESET, "paper-scale": PAPER_PRESET}
