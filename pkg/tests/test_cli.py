import csv
import json
from pathlib import Path

import numpy as np
import pytest

from omnisteer.cli import (ExperimentSpec, build_config, build_spec,
                           dbm_to_watts, main, run_experiment, serialize_spec,
                           snr_to_noise, spec_from_dict)

TINY = {"M": 8, "N_T": 8, "N_R": 8, "K": 4, "N_S": 2, "N_cl": 2, "N_ray": 3}


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


class TestConfigBoundary:
    def test_dbm_conversion(self):
        assert dbm_to_watts(40.0) == pytest.approx(10.0)
        assert dbm_to_watts(30.0) == pytest.approx(1.0)

    def test_snr_conversion(self):
        assert snr_to_noise(10.0, 10.0) == pytest.approx(1.0)
        assert snr_to_noise(10.0, 0.0) == pytest.approx(10.0)

    def test_build_config_dbm_and_snr(self):
        cfg = build_config({"p_t_dbm": 40.0, "snr_db": 10.0})
        assert cfg.P_T == pytest.approx(10.0)
        assert cfg.sigma_C2 == pytest.approx(1.0)
        assert cfg.sigma_S2 == pytest.approx(1.0)

    def test_explicit_noise_wins(self):
        cfg = build_config({"snr_db": 10.0, "sigma_C2": 7.0})
        assert cfg.sigma_C2 == 7.0

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            build_config({"antennas": 4})

    def test_conflicting_power_rejected(self):
        with pytest.raises(ValueError):
            build_config({"P_T": 1.0, "p_t_dbm": 30.0})


class TestSpec:
    def test_round_trip_idempotent(self, tmp_path):
        spec = ExperimentSpec(kind="converge", config=dict(TINY), trials=2,
                              variants=["US-AGO-R"], seed=3)
        text = serialize_spec(spec)
        again = spec_from_dict(json.loads(text))
        assert serialize_spec(again) == text

    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentSpec(kind="nope")
        with pytest.raises(ValueError):
            ExperimentSpec(kind="converge", trials=0)
        with pytest.raises(ValueError):
            ExperimentSpec(kind="angle-bins", bins=2)
        with pytest.raises(ValueError):
            ExperimentSpec(kind="snr-sweep", snr_grid=[])
        with pytest.raises(ValueError):
            ExperimentSpec(kind="converge", variants=["WHAT"])

    def test_default_variants_by_kind(self):
        assert ExperimentSpec(kind="converge").variants == ["US-AGO-R", "US-AGO-S"]
        assert len(ExperimentSpec(kind="snr-sweep").variants) == 6


class TestConverge:
    def test_rows_and_monotonicity(self, tmp_path):
        spec = ExperimentSpec(kind="converge", config=dict(TINY), trials=1,
                              variants=["US-AGO-R"], out_dir=str(tmp_path), seed=1)
        path = run_experiment(spec)
        header, rows = read_csv(path)
        assert header == ["variant", "seed", "outer_iter", "sum_mi"]
        assert 1 <= len(rows) <= 10
        vals = [float(r[3]) for r in rows]
        assert all(vals[i + 1] >= vals[i] - 1e-3 for i in range(len(vals) - 1))

    def test_byte_identical_rerun(self, tmp_path):
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        bytes_out = []
        for d in (a_dir, b_dir):
            spec = ExperimentSpec(kind="converge", config=dict(TINY), trials=2,
                                  variants=["US-AGO-R"], out_dir=str(d), seed=7)
            bytes_out.append(Path(run_experiment(spec)).read_bytes())
        assert bytes_out[0] == bytes_out[1]

    def test_inner_trace_optional_file(self, tmp_path):
        spec = ExperimentSpec(kind="converge", config=dict(TINY), trials=1,
                              variants=["US-AGO-R"], out_dir=str(tmp_path),
                              seed=1, trace_inner=True)
        run_experiment(spec)
        header, rows = read_csv(tmp_path / "convergence_inner.csv")
        assert header == ["variant", "seed", "outer_iter", "sweep", "surrogate"]
        assert len(rows) > 0


class TestSnrSweep:
    def test_shape_and_columns(self, tmp_path):
        spec = ExperimentSpec(kind="snr-sweep", config=dict(TINY), trials=1,
                              variants=["US-AGO-R", "MMSE-RP"],
                              snr_grid=[0.0, 10.0], out_dir=str(tmp_path),
                              seed=2, nmse_trials=500)
        path = run_experiment(spec)
        header, rows = read_csv(path)
        assert header == ["variant", "snr_db", "mean_sum_mi", "std_sum_mi",
                          "mean_sum_nmse", "std_sum_nmse", "trials"]
        assert len(rows) == 4
        # NMSE should not grow with SNR for a fixed variant
        by_variant = {}
        for r in rows:
            by_variant.setdefault(r[0], {})[float(r[1])] = float(r[4])
        for vals in by_variant.values():
            assert vals[10.0] <= vals[0.0] + 1e-9


class TestBeampattern:
    def test_normalization_and_columns(self, tmp_path):
        spec = ExperimentSpec(kind="beampattern", config=dict(TINY),
                              variants=["US-AGO-R"], out_dir=str(tmp_path), seed=3)
        path = run_experiment(spec)
        header, rows = read_csv(path)
        assert header == ["side", "angle_deg", "power_norm", "variant", "array_size"]
        assert len(rows) == 2 * 361
        for side in ("forward", "backward"):
            powers = [float(r[2]) for r in rows if r[0] == side]
            assert max(powers) == pytest.approx(1.0, abs=1e-12)
        assert all(r[4] == "8" for r in rows)


class TestAngleBins:
    def test_forward_only_restriction(self, tmp_path):
        spec = ExperimentSpec(kind="angle-bins", config=dict(TINY), trials=1,
                              bins=4, variants=["US-AGO-R"],
                              out_dir=str(tmp_path), seed=4)
        path = run_experiment(spec)
        header, rows = read_csv(path)
        assert header == ["bin_center_deg", "mean_sensing_mi", "std_sensing_mi",
                          "scheme"]
        assert len(rows) == 8
        for r in rows:
            center, mi, scheme = float(r[0]), float(r[1]), r[3]
            if scheme == "forward-only" and center >= 180.0:
                assert mi == 0.0
            if scheme == "proposed":
                assert mi > 0.0


class TestSingleRun:
    def test_summary_columns(self, tmp_path):
        spec = ExperimentSpec(kind="single-run", config=dict(TINY),
                              variants=["MMSE"], out_dir=str(tmp_path),
                              seed=5, nmse_trials=500)
        path = run_experiment(spec)
        header, rows = read_csv(path)
        assert header[:3] == ["variant", "seed", "sum_mi"]
        assert len(rows) == 1
        assert rows[0][0] == "MMSE"
        assert int(rows[0][-1]) == 2   # scheduled users


class TestMain:
    def test_success_exit_code(self, tmp_path, capsys):
        cfg_path = tmp_path / "spec.json"
        cfg_path.write_text(json.dumps({"config": dict(TINY), "trials": 1,
                                        "variants": ["MMSE-RP"],
                                        "nmse_trials": 200}), encoding="utf-8")
        code = main(["single-run", "--config", str(cfg_path),
                     "--out", str(tmp_path), "--seed", "9"])
        assert code == 0
        assert (tmp_path / "single_run.csv").exists()

    def test_failure_exit_code(self, tmp_path, capsys):
        code = main(["converge", "--variant", "BOGUS", "--out", str(tmp_path)])
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_flag_overrides(self, tmp_path):
        args_spec = build_spec_args(tmp_path)
        assert args_spec.trials == 3
        assert args_spec.variants == ["MMSE"]
        assert args_spec.snr_grid == [1.0, 2.0]


def build_spec_args(tmp_path):
    import argparse
    from omnisteer.cli import build_spec
    ns = argparse.Namespace(kind="snr-sweep", config=None, seed=11, trials=3,
                            variant="MMSE", snr="1,2", out=str(tmp_path),
                            bins=None, target_angle=None, nmse_trials=100,
                            trace_inner=False)
    return build_spec(ns)
