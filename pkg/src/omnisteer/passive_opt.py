"""Backward passive-coefficient optimization.

The plate-phase subproblem is a quadratic maximization over unit-modulus
vectors. Two routes are implemented: conjugate-gradient ascent on the
product-of-circles manifold, and semidefinite relaxation where the lifted
program is solved by low-rank factorization (ascent over unit-norm rows)
and rounded by Gaussian randomization.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .metrics import DesignVariables
from .model import ChannelSet, SystemConfig, crandn

ARMIJO_SLOPE = 1e-4
ARMIJO_CONTRACTION = 0.5
ARMIJO_MAX_BACKTRACKS = 30


@dataclass
class QuadraticForm:
    """Hermitian PSD quadratic for the phase problem, with its generating
    aperture vector."""

    C: np.ndarray            # (M, M) Hermitian PSD
    b: np.ndarray            # (M,) aperture excitation


@dataclass
class RgaTrace:
    """Per-iteration record of one manifold ascent run."""

    objective_per_iter: list = field(default_factory=list)
    grad_norm_per_iter: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def reduce_to_quadratic(ch: ChannelSet, vars: DesignVariables) -> QuadraticForm:
    """Collapse the echo quadratic onto the phase vector.

    With b the backward aperture excitation G W diag(alpha) s, the echo
    power equals theta^H C theta for C = diag(b)^H R diag(b), for every
    unit-modulus theta.
    """
    b = ch.G @ (vars.W @ (vars.alpha * ch.s))
    c = b.conj()[:, None] * ch.R_H * b[None, :]
    return QuadraticForm(C=0.5 * (c + c.conj().T), b=b)


# Rows of V live on complex unit spheres; the phase vector is the r = 1
# case. All inner products are the real part of the Hermitian product.


def _rows_inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.real(np.vdot(a, b)))


def _rows_project(v: np.ndarray, z: np.ndarray) -> np.ndarray:
    rad = np.real(np.sum(v.conj() * z, axis=-1, keepdims=True))
    return z - rad * v


def _rows_retract(v: np.ndarray, z: np.ndarray) -> np.ndarray:
    w = v + z
    return w / np.linalg.norm(w, axis=-1, keepdims=True)


def project_tangent(theta: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Project z onto the tangent space of the circle manifold at theta."""
    return z - np.real(z * theta.conj()) * theta


def riemannian_gradient(theta: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Tangent gradient of theta^H C theta at a unit-modulus theta."""
    return project_tangent(theta, 2.0 * (C @ theta))


def transport(theta_new: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Carry a direction into the tangent space at theta_new."""
    return project_tangent(theta_new, eta)


def retract(theta: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Map a tangent step back onto the circle manifold, entrywise."""
    w = theta + z
    return w / np.abs(w)


def _sphere_rows_ascent(C: np.ndarray, v0: np.ndarray, grad_tol: float,
                        max_iter: int, adaptive_step: bool = False) -> tuple[np.ndarray, RgaTrace]:
    """Polak-Ribiere conjugate-gradient ascent of Re tr(V^H C V) over
    matrices with unit-norm rows. Steps use Armijo backtracking, the mixing
    parameter is clamped at zero, and only improving steps are accepted.
    With adaptive_step the line search starts from twice the last accepted
    step instead of one."""

    def objective(v):
        return float(np.real(np.sum(v.conj() * (C @ v))))

    v = v0
    f = objective(v)
    g = _rows_project(v, 2.0 * (C @ v))
    gnorm = float(np.linalg.norm(g))
    trace = RgaTrace([f], [gnorm], 0, gnorm <= grad_tol)
    eta = g
    last_step = 1.0
    while not trace.converged and trace.iterations < max_iter:
        slope = _rows_inner(g, eta)
        if slope <= 0.0:
            # transported history turned the direction downhill; restart
            eta = g
            slope = _rows_inner(g, g)
            if slope <= 0.0:
                break
        step = min(2.0 * last_step, 1e6) if adaptive_step else 1.0
        accepted = False
        for _ in range(ARMIJO_MAX_BACKTRACKS):
            v_new = _rows_retract(v, step * eta)
            f_new = objective(v_new)
            if f_new >= f + ARMIJO_SLOPE * step * slope:
                accepted = True
                break
            step *= ARMIJO_CONTRACTION
        if not accepted:
            break
        last_step = step
        g_prev, eta_prev = g, eta
        v, f = v_new, f_new
        g = _rows_project(v, 2.0 * (C @ v))
        gnorm = float(np.linalg.norm(g))
        carried = _rows_project(v, eta_prev)
        denom = _rows_inner(g_prev, g_prev)
        gamma = _rows_inner(g, g - carried) / denom if denom > 0 else 0.0
        gamma = max(gamma, 0.0)
        eta = g + gamma * carried
        trace.iterations += 1
        trace.objective_per_iter.append(f)
        trace.grad_norm_per_iter.append(gnorm)
        trace.converged = gnorm <= grad_tol
    return v, trace


def rga_optimize(C: np.ndarray, theta0: np.ndarray, cfg: SystemConfig, *,
                 epsilon: float | None = None,
                 q_max: int | None = None) -> tuple[np.ndarray, RgaTrace]:
    """Maximize theta^H C theta over unit-modulus theta by manifold ascent.

    Stops when the tangent gradient norm falls below the tolerance or the
    iteration cap is hit. The returned objective never falls below the
    start since only improving steps are accepted.
    """
    theta0 = np.asarray(theta0, dtype=complex)
    if np.max(np.abs(np.abs(theta0) - 1.0)) > 1e-9:
        raise ValueError("initial phases must be unit modulus")
    eps = cfg.epsilon if epsilon is None else epsilon
    cap = cfg.q_max if q_max is None else q_max
    if cap < 1:
        raise ValueError("iteration cap must be >= 1")
    v, trace = _sphere_rows_ascent(np.asarray(C, dtype=complex),
                                   theta0[:, None], eps, cap)
    theta = v[:, 0]
    return theta / np.abs(theta), trace


def solve_unit_diag_sdp(C: np.ndarray, rng: np.random.Generator, *,
                        rank: int | None = None, restarts: int = 5,
                        grad_tol: float | None = None,
                        max_iter: int = 1000) -> tuple[np.ndarray, float, float]:
    """Solve max tr(CQ) s.t. diag(Q) = 1, Q PSD by low-rank factorization.

    Q = V V^H with unit-norm rows of V turns the diagonal constraint into a
    manifold constraint, and at factor rank ceil(sqrt(2M)) local maxima of
    the factored problem are global for the relaxation; random restarts
    guard the exceptional cases. Returns (Q, optimal value, gradient
    residual of the best run).
    """
    m = C.shape[0]
    r = min(m, math.ceil(math.sqrt(2.0 * m))) if rank is None else rank
    tol = grad_tol if grad_tol is not None else 1e-6 * max(1.0, float(np.linalg.norm(C)))
    best_v, best_f, best_res = None, -np.inf, np.inf
    for _ in range(restarts):
        v0 = crandn(rng, m, r)
        v0 = v0 / np.linalg.norm(v0, axis=1, keepdims=True)
        v, trace = _sphere_rows_ascent(C, v0, tol, max_iter, adaptive_step=True)
        if trace.objective_per_iter[-1] > best_f:
            best_v = v
            best_f = trace.objective_per_iter[-1]
            best_res = trace.grad_norm_per_iter[-1]
    if best_res > tol:
        warnings.warn(f"relaxation ascent stopped with gradient residual "
                      f"{best_res:.3e} above tolerance {tol:.3e}")
    q = best_v @ best_v.conj().T
    return 0.5 * (q + q.conj().T), float(best_f), float(best_res)


def sdr_optimize(C: np.ndarray, cfg: SystemConfig,
                 rng: np.random.Generator) -> tuple[np.ndarray, float, float]:
    """Semidefinite relaxation with Gaussian randomization.

    Solves the lifted diagonal-constrained program, draws cfg.N_rand
    candidates by taking the phases of samples with covariance equal to the
    relaxation optimum, and returns the best candidate together with its
    achieved value and the relaxation value (an upper bound).
    """
    C = np.asarray(C, dtype=complex)
    scale = max(1.0, float(np.linalg.norm(C)))
    if np.linalg.norm(C - C.conj().T) > 1e-8 * scale:
        raise ValueError("quadratic matrix must be Hermitian")
    if cfg.N_rand < 1:
        raise ValueError("need at least one randomization sample")
    C = 0.5 * (C + C.conj().T)

    q, relaxation, _ = solve_unit_diag_sdp(C, rng)
    evals, omega = np.linalg.eigh(q)
    factor = omega * np.sqrt(np.clip(evals, 0.0, None))[None, :]
    x = crandn(rng, C.shape[0], cfg.N_rand)
    cands = np.exp(1j * np.angle(factor @ x))
    vals = np.real(np.einsum("mq,mn,nq->q", cands.conj(), C, cands))
    best = int(np.argmax(vals))
    return cands[:, best], float(vals[best]), float(relaxation)
