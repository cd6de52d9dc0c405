"""Full optimization runs.

Hosts the alternating outer loop (passive phases, then scheduling and
precoding) in its two passive-solver variants, the four baseline designs,
and the shared metric evaluation. Every run is deterministic given the
channel realization and the supplied generator.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .metrics import (DesignVariables, MetricsReport, check_feasible,
                      comm_mi_per_user, sensing_mi, sum_nmse, sum_objective)
from .model import ChannelSet, SystemConfig
from .passive_opt import rga_optimize, reduce_to_quadratic, sdr_optimize
from .wmmse import initialize_state, inner_loop, round_schedule

VARIANTS = ("US-AGO-R", "US-AGO-S", "IF", "IF-RP", "MMSE", "MMSE-RP")


@dataclass
class RunResult:
    """Outcome of one optimizer or baseline run."""

    vars: DesignVariables
    trace: list                  # sum objective after each outer iteration
    metrics: MetricsReport
    variant: str
    wall_time: float
    inner_trace: list = field(default_factory=list)  # surrogate values per sweep


def evaluate(vars: DesignVariables, ch: ChannelSet, cfg: SystemConfig,
             nmse_trials: int = 0,
             nmse_rng: np.random.Generator | None = None) -> MetricsReport:
    """Metric suite for a finished design; NMSE only when trials > 0."""
    mi = comm_mi_per_user(vars, ch, cfg)
    report = MetricsReport(
        mi_per_user=mi,
        sensing_mi=sensing_mi(vars, ch, cfg),
        sum_objective=sum_objective(vars, ch, cfg),
    )
    if nmse_trials > 0:
        if nmse_rng is None:
            raise ValueError("NMSE evaluation needs a generator")
        total, comm, sens = sum_nmse(vars, ch, cfg, nmse_trials, nmse_rng)
        report.sum_nmse, report.comm_nmse, report.sensing_nmse = total, comm, sens
    return report


def _quad_value(theta: np.ndarray, c: np.ndarray) -> float:
    return float(np.real(np.vdot(theta, c @ theta)))


def us_ago(ch: ChannelSet, cfg: SystemConfig, variant: str,
           rng: np.random.Generator, *, optimize_passive: bool = True,
           nmse_trials: int = 0,
           nmse_rng: np.random.Generator | None = None,
           label: str | None = None) -> RunResult:
    """Alternate passive-phase and scheduling/precoding optimization.

    variant "R" uses warm-started manifold ascent for the phases, "S" the
    semidefinite relaxation; since the relaxation restarts from scratch,
    its candidate is only adopted when it beats the incumbent, keeping the
    echo term monotone across outer iterations. After convergence the
    schedule is hardened and the precoder refit with the binary schedule.
    """
    if variant not in ("R", "S"):
        raise ValueError(f"variant must be 'R' or 'S', got {variant!r}")
    tic = time.perf_counter()
    if optimize_passive:
        theta = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, cfg.M))
    else:
        theta = np.ones(cfg.M, dtype=complex)
    state = initialize_state(ch, cfg, theta)
    trace: list[float] = []
    inner_trace: list[list[float]] = []
    prev = None
    for _ in range(cfg.i_max):
        if optimize_passive:
            qf = reduce_to_quadratic(ch, state.vars())
            if variant == "R":
                state.theta, _ = rga_optimize(qf.C, state.theta, cfg)
            else:
                cand, achieved, _ = sdr_optimize(qf.C, cfg, rng)
                if achieved > _quad_value(state.theta, qf.C):
                    state.theta = cand
        state = inner_loop(state, ch, cfg)
        inner_trace.append(list(state.surrogate_per_iter))
        smi = sum_objective(state.vars(), ch, cfg)
        trace.append(smi)
        if prev is not None and abs(smi - prev) <= cfg.epsilon * max(abs(prev), 1e-12):
            break
        prev = smi

    # harden the schedule and refit the precoder with it fixed
    state.alpha = round_schedule(state.alpha, cfg.N_S)
    state.W = state.W * (state.alpha > 0.5)[None, :]
    state = inner_loop(state, ch, cfg, fix_alpha=True)
    final = state.vars()
    check_feasible(final, cfg)

    name = label or ("US-AGO-R" if variant == "R" else "US-AGO-S")
    metrics = evaluate(final, ch, cfg, nmse_trials, nmse_rng)
    return RunResult(vars=final, trace=trace, metrics=metrics, variant=name,
                     wall_time=time.perf_counter() - tic,
                     inner_trace=inner_trace)


def _scale_columns_equal_power(w: np.ndarray, total_power: float) -> np.ndarray:
    """Rescale every column to the same power, summing to the budget."""
    per = total_power / w.shape[1]
    norms = np.linalg.norm(w, axis=0)
    if np.any(norms == 0):
        raise ValueError("cannot power-scale a zero precoding column")
    return w * (np.sqrt(per) / norms)[None, :]


def _baseline_passive(ch: ChannelSet, cfg: SystemConfig, vars: DesignVariables,
                      random_phase: bool, rng: np.random.Generator) -> np.ndarray:
    """Plate phases for a baseline: uniform random, or ascent-optimized."""
    theta0 = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, cfg.M))
    if random_phase:
        return theta0
    vars.theta = theta0
    qf = reduce_to_quadratic(ch, vars)
    theta, _ = rga_optimize(qf.C, theta0, cfg)
    return theta


def _baseline_run(ch: ChannelSet, cfg: SystemConfig, w_sched: np.ndarray,
                  sched: np.ndarray, random_phase: bool,
                  rng: np.random.Generator, name: str,
                  nmse_trials: int, nmse_rng, tic: float) -> RunResult:
    alpha = np.zeros(cfg.K)
    alpha[sched] = 1.0
    w = np.zeros((cfg.N_T, cfg.K), dtype=complex)
    w[:, sched] = _scale_columns_equal_power(w_sched, cfg.P_T)
    vars = DesignVariables(alpha=alpha, W=w, theta=np.ones(cfg.M, dtype=complex))
    vars.theta = _baseline_passive(ch, cfg, vars, random_phase, rng)
    check_feasible(vars, cfg)
    metrics = evaluate(vars, ch, cfg, nmse_trials, nmse_rng)
    return RunResult(vars=vars, trace=[metrics.sum_objective], metrics=metrics,
                     variant=name, wall_time=time.perf_counter() - tic)


def baseline_if(ch: ChannelSet, cfg: SystemConfig, random_phase: bool,
                rng: np.random.Generator, *, nmse_trials: int = 0,
                nmse_rng: np.random.Generator | None = None) -> RunResult:
    """Interference-free baseline: random schedule, zero-forcing precoder
    with equal per-user power, plate phases optimized or random."""
    tic = time.perf_counter()
    sched = np.sort(rng.choice(cfg.K, size=cfg.N_S, replace=False))
    h = ch.h_C[sched].conj()                       # rows h_k^H
    gram = h @ h.conj().T
    if np.linalg.cond(gram) > 1e12:
        warnings.warn("scheduled channels nearly rank deficient; "
                      "using a regularized pseudo-inverse")
        w_sched = h.conj().T @ np.linalg.pinv(gram, rcond=1e-12)
    else:
        w_sched = h.conj().T @ np.linalg.inv(gram)
    return _baseline_run(ch, cfg, w_sched, sched, random_phase, rng,
                         "IF-RP" if random_phase else "IF",
                         nmse_trials, nmse_rng, tic)


def baseline_mmse(ch: ChannelSet, cfg: SystemConfig, random_phase: bool,
                  rng: np.random.Generator, *, nmse_trials: int = 0,
                  nmse_rng: np.random.Generator | None = None) -> RunResult:
    """Regularized zero-forcing baseline with random scheduling."""
    tic = time.perf_counter()
    sched = np.sort(rng.choice(cfg.K, size=cfg.N_S, replace=False))
    h = ch.h_C[sched].conj()
    reg = cfg.N_S * 4.0 * cfg.sigma_C2 / cfg.P_T
    w_sched = h.conj().T @ np.linalg.inv(h @ h.conj().T + reg * np.eye(cfg.N_S))
    return _baseline_run(ch, cfg, w_sched, sched, random_phase, rng,
                         "MMSE-RP" if random_phase else "MMSE",
                         nmse_trials, nmse_rng, tic)


def run_variant(name: str, ch: ChannelSet, cfg: SystemConfig,
                rng: np.random.Generator, *, nmse_trials: int = 0,
                nmse_rng: np.random.Generator | None = None) -> RunResult:
    """Dispatch one of the six named variants."""
    kw = dict(nmse_trials=nmse_trials, nmse_rng=nmse_rng)
    if name == "US-AGO-R":
        return us_ago(ch, cfg, "R", rng, **kw)
    if name == "US-AGO-S":
        return us_ago(ch, cfg, "S", rng, **kw)
    if name == "IF":
        return baseline_if(ch, cfg, False, rng, **kw)
    if name == "IF-RP":
        return baseline_if(ch, cfg, True, rng, **kw)
    if name == "MMSE":
        return baseline_mmse(ch, cfg, False, rng, **kw)
    if name == "MMSE-RP":
        return baseline_mmse(ch, cfg, True, rng, **kw)
    raise ValueError(f"unknown variant {name!r}; choose from {VARIANTS}")
