"""Experiment harness.

Parses a JSON config plus command-line overrides, runs seeded experiment
protocols, and writes plotting-tool-agnostic CSV artifacts. This is the
only layer that speaks dB and dBm; the library sees linear units.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .metrics import beampattern
from .model import SystemConfig, build_channel_set, los_channel_set, spawn_rng
from .usago import VARIANTS, run_variant, us_ago

KINDS = ("converge", "snr-sweep", "beampattern", "angle-bins", "single-run")
DEFAULT_VARIANTS = {
    "converge": ["US-AGO-R", "US-AGO-S"],
    "snr-sweep": list(VARIANTS),
    "beampattern": ["US-AGO-R"],
    "angle-bins": ["US-AGO-R"],
    "single-run": ["US-AGO-R"],
}
OUTPUT_NAMES = {
    "converge": "convergence.csv",
    "snr-sweep": "snr_sweep.csv",
    "beampattern": "beampattern.csv",
    "angle-bins": "angle_bins.csv",
    "single-run": "single_run.csv",
}

# Fixed geometry of the beampattern scenario: mast height and ground
# segment length in meters, target angle in the plate's half-space.
SCENE_BS_HEIGHT_M = 50.0
SCENE_GROUND_SEGMENT_M = 150.0
DEFAULT_TARGET_DEG = 60.0


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def snr_to_noise(p_t: float, snr_db: float) -> float:
    """Noise power for a given SNR definition 10 log10(P_T / sigma^2)."""
    return p_t / 10.0 ** (snr_db / 10.0)


def build_config(overrides: dict) -> SystemConfig:
    """Construct a SystemConfig from a JSON-style dict.

    Accepts every SystemConfig field plus the boundary conveniences
    "p_t_dbm" (transmit power in dBm) and "snr_db" (sets both noise powers
    from the resulting P_T unless they are given explicitly).
    """
    d = dict(overrides)
    p_t_dbm = d.pop("p_t_dbm", None)
    snr_db = d.pop("snr_db", None)
    valid = {f.name for f in dataclasses.fields(SystemConfig)}
    unknown = set(d) - valid
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}; "
                         f"valid keys: {sorted(valid | {'p_t_dbm', 'snr_db'})}")
    if p_t_dbm is not None:
        if "P_T" in d:
            raise ValueError("give either P_T (watts) or p_t_dbm, not both")
        d["P_T"] = dbm_to_watts(float(p_t_dbm))
    if snr_db is not None:
        p_t = d.get("P_T", SystemConfig.P_T)
        sigma = snr_to_noise(p_t, float(snr_db))
        d.setdefault("sigma_C2", sigma)
        d.setdefault("sigma_S2", sigma)
    return SystemConfig(**d)


@dataclass
class ExperimentSpec:
    """One experiment request: protocol kind, config overrides, and sweep
    parameters. Field semantics mirror the CLI flags."""

    kind: str
    config: dict = field(default_factory=dict)
    variants: list = field(default_factory=list)
    snr_grid: list = field(default_factory=lambda: [0.0, 5.0, 10.0])
    trials: int = 1
    bins: int = 12
    out_dir: str = "."
    seed: int = 0
    target_angle_deg: float = DEFAULT_TARGET_DEG
    nmse_trials: int = 10000
    trace_inner: bool = False

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.kind == "snr-sweep" and len(self.snr_grid) == 0:
            raise ValueError("snr-sweep needs a nonempty SNR grid")
        if self.kind == "angle-bins" and self.bins < 4:
            raise ValueError("angle-bins needs bins >= 4")
        if not self.variants:
            self.variants = list(DEFAULT_VARIANTS[self.kind])
        for v in self.variants:
            if v not in VARIANTS:
                raise ValueError(f"unknown variant {v!r}; choose from {VARIANTS}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "config": dict(self.config),
            "variants": list(self.variants),
            "snr_grid": list(self.snr_grid),
            "trials": self.trials,
            "bins": self.bins,
            "out_dir": self.out_dir,
            "seed": self.seed,
            "target_angle_deg": self.target_angle_deg,
            "nmse_trials": self.nmse_trials,
            "trace_inner": self.trace_inner,
        }


def spec_from_dict(d: dict) -> ExperimentSpec:
    valid = {f.name for f in dataclasses.fields(ExperimentSpec)}
    unknown = set(d) - valid
    if unknown:
        raise ValueError(f"unknown spec keys {sorted(unknown)}")
    return ExperimentSpec(**d)


def serialize_spec(spec: ExperimentSpec) -> str:
    return json.dumps(spec.to_dict(), indent=2, sort_keys=True)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header: list, rows: list) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc
    return path


# ---------------------------------------------------------------------------
# protocols


def run_converge(spec: ExperimentSpec) -> Path:
    """Outer-iteration objective traces per variant and trial."""
    cfg = build_config(spec.config)
    psi = np.deg2rad(spec.target_angle_deg)
    rows, inner_rows = [], []
    for vi, variant in enumerate(spec.variants):
        for t in range(spec.trials):
            ch = build_channel_set(cfg, psi, spawn_rng(spec.seed, 0, t))
            result = run_variant(variant, ch, cfg, spawn_rng(spec.seed, 1, t, vi))
            for i, smi in enumerate(result.trace, start=1):
                rows.append((variant, t, i, smi))
            if spec.trace_inner:
                for i, sweep_vals in enumerate(result.inner_trace, start=1):
                    for p, val in enumerate(sweep_vals):
                        inner_rows.append((variant, t, i, p, val))
    out = _write_csv(Path(spec.out_dir) / OUTPUT_NAMES["converge"],
                     ["variant", "seed", "outer_iter", "sum_mi"], rows)
    if spec.trace_inner:
        _write_csv(Path(spec.out_dir) / "convergence_inner.csv",
                   ["variant", "seed", "outer_iter", "sweep", "surrogate"],
                   inner_rows)
    return out


def run_snr_sweep(spec: ExperimentSpec) -> Path:
    """Mean and spread of sum-MI and sum-NMSE over seeds, per SNR point.

    Channels are shared across SNR points and variants for each trial so
    curves differ only through the noise level and the design.
    """
    cfg0 = build_config(spec.config)
    psi = np.deg2rad(spec.target_angle_deg)
    channels = [build_channel_set(cfg0, psi, spawn_rng(spec.seed, 0, t))
                for t in range(spec.trials)]
    rows = []
    for vi, variant in enumerate(spec.variants):
        for si, snr_db in enumerate(spec.snr_grid):
            sigma = snr_to_noise(cfg0.P_T, float(snr_db))
            cfg = replace(cfg0, sigma_C2=sigma, sigma_S2=sigma)
            mis, nmses = [], []
            for t in range(spec.trials):
                result = run_variant(
                    variant, channels[t], cfg,
                    spawn_rng(spec.seed, 1, t, vi, si),
                    nmse_trials=spec.nmse_trials,
                    nmse_rng=spawn_rng(spec.seed, 3, t, si))
                mis.append(result.metrics.sum_objective)
                nmses.append(result.metrics.sum_nmse)
            rows.append((variant, float(snr_db),
                         float(np.mean(mis)), float(np.std(mis)),
                         float(np.mean(nmses)), float(np.std(nmses)),
                         spec.trials))
    return _write_csv(Path(spec.out_dir) / OUTPUT_NAMES["snr-sweep"],
                      ["variant", "snr_db", "mean_sum_mi", "std_sum_mi",
                       "mean_sum_nmse", "std_sum_nmse", "trials"], rows)


def scenario_user_angles(cfg: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """User directions for the beampattern scene: users uniform on the
    ground segment in front of an elevated transmitter."""
    x = rng.uniform(0.0, SCENE_GROUND_SEGMENT_M, size=cfg.K)
    return -np.arctan2(SCENE_BS_HEIGHT_M, x)


def run_beampattern(spec: ExperimentSpec) -> Path:
    """Forward and backward patterns of the finished design on a 1-degree
    grid, users on the ground segment and the target in the back
    half-space (transmission mode)."""
    cfg = build_config(spec.config)
    psi_t = np.deg2rad(spec.target_angle_deg)
    grid_deg = np.arange(-180.0, 181.0, 1.0)
    rows = []
    for vi, variant in enumerate(spec.variants):
        rng_scene = spawn_rng(spec.seed, 0, vi)
        angles = scenario_user_angles(cfg, rng_scene)
        ch = los_channel_set(cfg, angles, psi_t, rng_scene)
        result = run_variant(variant, ch, cfg, spawn_rng(spec.seed, 1, vi))
        result.vars.mode = "T"
        for side in ("forward", "backward"):
            pattern = beampattern(result.vars, ch, cfg, np.deg2rad(grid_deg), side)
            for (ang, pw), deg in zip(pattern, grid_deg):
                rows.append((side, float(deg), float(pw), variant, cfg.M))
    return _write_csv(Path(spec.out_dir) / OUTPUT_NAMES["beampattern"],
                      ["side", "angle_deg", "power_norm", "variant", "array_size"],
                      rows)


def _bin_geometry(center_deg: float) -> tuple[float, str, bool]:
    """Map a global angle in [0, 360) to the plate-local angle, the plate
    mode serving that half-space, and whether it lies in the front half."""
    front = center_deg < 180.0
    if front:
        return np.deg2rad(center_deg - 90.0), "R", True
    return np.deg2rad(270.0 - center_deg), "T", False


def run_angle_bins(spec: ExperimentSpec) -> Path:
    """Sensing-MI coverage over angle bins spanning the full circle.

    Single-user scenario; the proposed scheme steers the plate to each bin
    center, the forward-only reference keeps the plate inactive and is
    limited to the front half-space by construction.
    """
    cfg = replace(build_config(spec.config), K=1, N_S=1)
    variant = spec.variants[0]
    flavor = "S" if variant == "US-AGO-S" else "R"
    centers = (np.arange(spec.bins) + 0.5) * 360.0 / spec.bins
    rows = []
    for scheme in ("proposed", "forward-only"):
        for b, center in enumerate(centers):
            psi_local, mode, front = _bin_geometry(float(center))
            mis = []
            for t in range(spec.trials):
                if scheme == "forward-only" and not front:
                    mis.append(0.0)
                    continue
                ch = build_channel_set(cfg, psi_local, spawn_rng(spec.seed, 0, t))
                result = us_ago(ch, cfg, flavor, spawn_rng(spec.seed, 1, t, b),
                                optimize_passive=(scheme == "proposed"))
                result.vars.mode = mode
                mis.append(result.metrics.sensing_mi)
            rows.append((float(center), float(np.mean(mis)), float(np.std(mis)),
                         scheme))
    return _write_csv(Path(spec.out_dir) / OUTPUT_NAMES["angle-bins"],
                      ["bin_center_deg", "mean_sensing_mi", "std_sensing_mi",
                       "scheme"], rows)


def run_single(spec: ExperimentSpec) -> Path:
    """One full run per variant with the complete metric suite."""
    cfg = build_config(spec.config)
    psi = np.deg2rad(spec.target_angle_deg)
    rows = []
    for vi, variant in enumerate(spec.variants):
        ch = build_channel_set(cfg, psi, spawn_rng(spec.seed, 0, 0))
        result = run_variant(variant, ch, cfg, spawn_rng(spec.seed, 1, 0, vi),
                             nmse_trials=spec.nmse_trials,
                             nmse_rng=spawn_rng(spec.seed, 3, 0))
        m = result.metrics
        rows.append((variant, spec.seed, m.sum_objective,
                     float(np.sum(m.mi_per_user)), m.sensing_mi,
                     m.sum_nmse, m.comm_nmse, m.sensing_nmse,
                     len(result.trace),
                     int(np.sum(result.vars.alpha > 0.5))))
    return _write_csv(Path(spec.out_dir) / OUTPUT_NAMES["single-run"],
                      ["variant", "seed", "sum_mi", "comm_mi_sum", "sensing_mi",
                       "sum_nmse", "comm_nmse", "sensing_nmse", "outer_iters",
                       "n_scheduled"], rows)


RUNNERS = {
    "converge": run_converge,
    "snr-sweep": run_snr_sweep,
    "beampattern": run_beampattern,
    "angle-bins": run_angle_bins,
    "single-run": run_single,
}


def run_experiment(spec: ExperimentSpec) -> Path:
    return RUNNERS[spec.kind](spec)


# ---------------------------------------------------------------------------
# command line


def _parse_list(text: str) -> list:
    return [item.strip() for item in text.split(",") if item.strip()]


def build_spec(args: argparse.Namespace) -> ExperimentSpec:
    base = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise OSError(f"cannot read config {args.config}: {exc}") from exc
    base["kind"] = args.kind
    if args.seed is not None:
        base["seed"] = args.seed
    if args.trials is not None:
        base["trials"] = args.trials
    if args.variant is not None:
        base["variants"] = _parse_list(args.variant)
    if args.snr is not None:
        base["snr_grid"] = [float(v) for v in _parse_list(args.snr)]
    if args.out is not None:
        base["out_dir"] = args.out
    if args.bins is not None:
        base["bins"] = args.bins
    if args.target_angle is not None:
        base["target_angle_deg"] = args.target_angle
    if args.nmse_trials is not None:
        base["nmse_trials"] = args.nmse_trials
    if args.trace_inner:
        base["trace_inner"] = True
    return spec_from_dict(base)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="omnisteer",
        description="Seeded experiment harness for the air-ground "
                    "scheduling/beamforming optimizer; writes CSV artifacts.")
    parser.add_argument("kind", choices=KINDS, help="experiment protocol")
    parser.add_argument("--config", help="JSON experiment spec / config overrides")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--trials", type=int, default=None)
    parser.add_argument("--variant", default=None,
                        help="comma-separated list, e.g. 'US-AGO-R,MMSE'")
    parser.add_argument("--snr", default=None,
                        help="comma-separated dB grid, e.g. '0,5,10'")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--bins", type=int, default=None,
                        help="number of angle bins (angle-bins protocol)")
    parser.add_argument("--target-angle", type=float, default=None,
                        help="target angle in degrees (plate-local)")
    parser.add_argument("--nmse-trials", type=int, default=None,
                        help="Monte-Carlo draws for the NMSE metrics")
    parser.add_argument("--trace-inner", action="store_true",
                        help="also record inner-sweep surrogate traces")
    args = parser.parse_args(argv)
    try:
        spec = build_spec(args)
        path = run_experiment(spec)
    except Exception as exc:  # surface a diagnostic, nonzero exit
        print(f"omnisteer: error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
