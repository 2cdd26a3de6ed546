"""Tests for the seeded Monte-Carlo harness and its serialization."""

import dataclasses
import math

import numpy as np
import pytest

from irsmimo.channel import (SystemGeometry, effective_channel, pathloss,
                             sample_paths, synth_channels)
from irsmimo.harness import (CSV_HEADER, ConfigError, DESK_PRESET,
                             ExperimentConfig, PAPER_PRESET, PRESETS,
                             TrialRecord, config_text, nmse, parse_config,
                             parse_csv, pnr_to_sigma2, run_trial, summarize,
                             sweep, to_csv)
from irsmimo.wmmse import DownlinkScenario, alt_wmmse

from conftest import cgauss

SMALL_KW = dict(n_bs=16, n_ue=8, m_y=4, m_z=4, g_bs=16, g_ue=8, g_y=4,
                g_z=4, k_true=2, on_grid=True)


class TestConfig:
    def test_defaults_validate(self):
        cfg = ExperimentConfig()
        cfg.validate()
        geom = cfg.geometry()
        assert (geom.n_bs, geom.n_ue, geom.m) == (16, 8, 16)

    def test_text_roundtrip(self):
        cfg = ExperimentConfig(algorithm="cs_est", sweep_axis="PNR",
                               sweep_values=(0.0, 10.0), trials=3, t1=25,
                               on_grid=True, mu_g=1e-3, timings=True)
        assert parse_config(config_text(cfg)) == cfg

    def test_comments_blanks_and_optional_fields(self):
        cfg = parse_config(
            "# comment line\n"
            "\n"
            "algorithm = cs_est   # estimator arm\n"
            "t1 = none\n"
            "k_hat = 4\n"
            "sweep_values = 50, 100\n"
            "on_grid = yes\n")
        assert cfg.algorithm == "cs_est"
        assert cfg.t1 is None
        assert cfg.k_hat == 4
        assert cfg.sweep_values == (50.0, 100.0)
        assert cfg.on_grid is True

    @pytest.mark.parametrize("text", [
        "bogus_key = 3",
        "trials", "trials = many", "timings = sometimes",
        "algorithm = genie", "sweep_axis = D",
        "sweep_values = ", "trials = 0", "threads = 0", "k_true = 0",
        "t = 3000", "d_bi = 0",
    ])
    def test_bad_configs_rejected(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_presets(self):
        assert PRESETS == {"desk-scale": DESK_PRESET,
                           "paper-scale": PAPER_PRESET}
        for preset in PRESETS.values():
            preset.validate()
        geom = PAPER_PRESET.geometry()
        assert (geom.n_bs, geom.n_ue, geom.m) == (36, 16, 36)
        assert PAPER_PRESET.trials == 100


class TestMetrics:
    def test_pnr_definition_at_zero_db(self):
        assert pnr_to_sigma2(0.0, 150.0, 10.0, 1.0) == pytest.approx(
            pathloss(150.0) * pathloss(10.0), rel=1e-15)

    def test_ten_db_divides_noise_by_ten(self):
        lo = pnr_to_sigma2(0.0, 150.0, 10.0)
        hi = pnr_to_sigma2(10.0, 150.0, 10.0)
        assert lo / hi == pytest.approx(10.0, rel=1e-12)

    def test_pilot_power_scales_noise(self):
        assert pnr_to_sigma2(5.0, 80.0, 20.0, 4.0) == pytest.approx(
            4.0 * pnr_to_sigma2(5.0, 80.0, 20.0, 1.0), rel=1e-15)

    def test_distances_checked(self):
        with pytest.raises(ValueError):
            pnr_to_sigma2(0.0, 0.0, 10.0)

    def test_nmse_reference_points(self):
        rng = np.random.default_rng(0)
        h = cgauss(rng, (6, 4))
        assert nmse(h, h) == 0.0
        assert nmse(h, np.zeros_like(h)) == pytest.approx(1.0)
        assert nmse(h, 2 * h) == pytest.approx(1.0)

    def test_nmse_input_checks(self):
        h = np.ones((2, 2), dtype=complex)
        with pytest.raises(ValueError, match="shape"):
            nmse(h, np.ones((2, 3), dtype=complex))
        with pytest.raises(ValueError, match="zero"):
            nmse(np.zeros_like(h), h)


class TestCsv:
    RECORDS = [
        TrialRecord(0, "mo_est", 100, 0.0, 10.0, 0.25, 12.5, 7, 0.0),
        TrialRecord(1, "cs_est", 60, -5.0, 7.5, 1e-11, 3.25, 6, 1.5),
    ]

    def test_row_format(self):
        assert self.RECORDS[0].to_csv_row() == \
            "0,mo_est,100,0.0,10.0,0.25,12.5,7,0.0"

    def test_header_and_lf_endings(self):
        text = to_csv(self.RECORDS)
        assert text.startswith(CSV_HEADER + "\n")
        assert "\r" not in text
        assert text.endswith("\n")
        assert len(text.split("\n")) == 4

    def test_roundtrip_exact(self):
        assert parse_csv(to_csv(self.RECORDS)) == self.RECORDS

    def test_header_validated(self):
        with pytest.raises(ValueError, match="header"):
            parse_csv("wrong,header\n1,2\n")

    def test_summarize_groups_and_skips_failures(self):
        nan = float("nan")
        recs = [
            TrialRecord(0, "mo_est", 100, 0.0, 10.0, 0.2, 10.0, 5, 0.0),
            TrialRecord(1, "mo_est", 100, 0.0, 10.0, 0.4, 12.0, 5, 0.0),
            TrialRecord(2, "mo_est", 100, 0.0, 10.0, nan, nan, 0, 0.0),
            TrialRecord(0, "mo_est", 150, 0.0, 10.0, 0.1, 11.0, 5, 0.0),
        ]
        rows = summarize(recs)
        assert [row["t"] for row in rows] == [100, 150]
        first = rows[0]
        assert first["n"] == 2
        assert first["median_nmse"] == pytest.approx(0.3)
        assert first["mean_se"] == pytest.approx(11.0)
        assert rows[1]["median_nmse"] == pytest.approx(0.1)


class TestRunTrial:
    def test_deterministic_records(self):
        cfg = ExperimentConfig(algorithm="cs_est", t=20, t1=8,
                               sweep_values=(20.0,), **SMALL_KW)
        assert run_trial(cfg, 0, 3) == run_trial(cfg, 0, 3)

    def test_perfect_csi_without_training_matches_direct_pipeline(self):
        cfg = ExperimentConfig(algorithm="perfect_csi", sweep_axis="SNR",
                               sweep_values=(10.0,), t=0, **SMALL_KW)
        rec = run_trial(cfg, 0, 5)
        ss = np.random.SeedSequence(cfg.master_seed, spawn_key=(0, 5))
        rng_chan, _, _, rng_bf = [np.random.default_rng(c)
                                  for c in ss.spawn(4)]
        geom = cfg.geometry()
        ch = synth_channels(geom, sample_paths(geom, cfg.k_true, rng_chan,
                                               on_grid=True))
        sigma2_d = pnr_to_sigma2(10.0, cfg.d_bi, cfg.d_iu, 1.0)
        scen = DownlinkScenario(geom, ch.h_c, sigma2_d, cfg.n_s, 0,
                                cfg.t_tot)
        sol = alt_wmmse(scen, rng_bf, cfg.eps3)
        assert rec.se_bits_s_hz == sol.se
        assert rec.nmse == 0.0
        assert rec.outer_iters == sol.iterations
        assert rec.t == 0 and rec.snr_db == 10.0

    def test_sweep_axes_apply_to_columns(self):
        base = dict(algorithm="perfect_csi", t=0, **SMALL_KW)
        rec = run_trial(ExperimentConfig(sweep_axis="T",
                                         sweep_values=(30.0,), **base), 0, 0)
        assert rec.t == 30
        rec = run_trial(ExperimentConfig(sweep_axis="PNR",
                                         sweep_values=(-5.0,), t=0,
                                         **SMALL_KW,
                                         algorithm="perfect_csi"), 0, 0)
        assert rec.pnr_db == -5.0

    def test_walltime_column_gated_by_timings(self):
        cfg = ExperimentConfig(algorithm="perfect_csi", sweep_axis="SNR",
                               sweep_values=(10.0,), t=0, **SMALL_KW)
        assert run_trial(cfg, 0, 0).wall_ms == 0.0
        timed = dataclasses.replace(cfg, timings=True)
        assert run_trial(timed, 0, 0).wall_ms > 0.0

    def test_estimator_without_slots_fails(self):
        cfg = ExperimentConfig(algorithm="mo_est", sweep_values=(0.0,),
                               **SMALL_KW)
        with pytest.raises(ValueError, match="training slot"):
            run_trial(cfg, 0, 0)

    def test_oracle_arm_dominates_with_slack(self):
        base = dict(t=60, t1=15, pnr_db=20.0, snr_db=10.0,
                    sweep_values=(60.0,), **SMALL_KW)
        arms = {alg: [run_trial(ExperimentConfig(algorithm=alg, **base),
                                0, s) for s in range(10)]
                for alg in ("perfect_csi", "mo_est", "cs_est",
                            "random_phase_baseline")}
        rp_wins = 0
        for s in range(10):
            oracle = arms["perfect_csi"][s].se_bits_s_hz
            for alg in ("mo_est", "cs_est"):
                assert oracle >= 0.995 * arms[alg][s].se_bits_s_hz
            rp_wins += arms["random_phase_baseline"][s].se_bits_s_hz <= oracle
            assert arms["mo_est"][s].nmse > 0
            assert arms["random_phase_baseline"][s].nmse == 0.0
        assert rp_wins >= 9


class TestSweep:
    def test_single_point_single_trial(self):
        cfg = ExperimentConfig(algorithm="perfect_csi", sweep_axis="SNR",
                               sweep_values=(10.0,), t=0, trials=1,
                               **SMALL_KW)
        records, failures = sweep(cfg)
        assert failures == 0
        assert len(records) == 1
        assert to_csv(records).count("\n") == 2

    def test_point_major_seed_minor_order(self):
        cfg = ExperimentConfig(algorithm="perfect_csi", sweep_axis="T",
                               sweep_values=(0.0, 5.0), t=0, trials=2,
                               **SMALL_KW)
        records, _ = sweep(cfg)
        assert [(r.t, r.seed) for r in records] == \
            [(0, 0), (0, 1), (5, 0), (5, 1)]

    def test_thread_count_does_not_change_bytes(self):
        cfg = ExperimentConfig(algorithm="cs_est", t=20, t1=8, trials=3,
                               sweep_values=(20.0,), **SMALL_KW)
        solo, _ = sweep(cfg)
        pooled, _ = sweep(dataclasses.replace(cfg, threads=3))
        assert to_csv(solo) == to_csv(pooled)

    def test_failed_trials_become_nan_rows(self):
        cfg = ExperimentConfig(algorithm="mo_est", sweep_values=(0.0,),
                               trials=2, **SMALL_KW)
        records, failures = sweep(cfg)
        assert failures == 2
        assert all(math.isnan(r.nmse) and math.isnan(r.se_bits_s_hz)
                   for r in records)
        assert [r.seed for r in records] == [0, 1]
        reparsed = parse_csv(to_csv(records))
        assert all(math.isnan(r.nmse) for r in reparsed)

    def test_sparse_estimator_error_floor_flattens_at_high_pnr(self):
        cfg = ExperimentConfig(algorithm="cs_est", sweep_axis="PNR",
                               sweep_values=(-10.0, 30.0, 50.0),
                               trials=12, t=100, k_true=2)
        records, failures = sweep(cfg)
        assert failures == 0
        rows = {row["pnr_db"]: row for row in summarize(records)}
        assert rows[30.0]["median_nmse"] < rows[-10.0]["median_nmse"]
        assert rows[50.0]["median_nmse"] > 0.5 * rows[30.0]["median_nmse"]
