"""Weighted-MMSE machinery for joint user scheduling and active beamforming.

The mutual-information objective is handled through its weighted-MSE
equivalent: closed-form receive combiners and MSE weights alternate with a
convex subproblem in the scheduling weights and the precoder. Every block
update below is an exact minimizer of the same tracked surrogate, so the
surrogate is non-increasing through each sweep by construction.

Scheduling weights enter the error expressions exactly as they enter the
signal model (inside the magnitudes), which keeps the MI/MMSE identities
exact for fractional weights; at binary weights all expressions reduce to
the usual forms.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as sp_optimize

from .metrics import DesignVariables
from .model import ChannelSet, SystemConfig

PENALTY_ANCHOR_CLIP = 1e-6
ALPHA_ZERO_TOL = 1e-12
SUBPROBLEM_TOL = 1e-6
SUBPROBLEM_MAX_ROUNDS = 200


@dataclass
class SolverState:
    """Mutable state of one inner optimization run.

    theta is the passive coefficient vector held fixed during the inner
    loop; it rides along so the sensing-side quantities are computable from
    the state alone.
    """

    u_C: np.ndarray                # (K,) per-user combiners
    u_S: np.ndarray                # (M,) sensing combiner
    Lambda_C: np.ndarray           # (K,) scalar MSE weights, >= 1
    Lambda_S: np.ndarray           # (M, M) Hermitian PD weight matrix
    alpha: np.ndarray              # (K,) scheduling weights in [0, 1]
    W: np.ndarray                  # (N_T, K) precoder
    theta: np.ndarray              # (M,) fixed plate phases
    surrogate_per_iter: list = field(default_factory=list)

    def vars(self) -> DesignVariables:
        return DesignVariables(alpha=self.alpha.copy(), W=self.W.copy(),
                               theta=self.theta.copy())


# ---------------------------------------------------------------------------
# elementary quantities


def _gains(W: np.ndarray, ch: ChannelSet) -> np.ndarray:
    """Effective gain matrix, entry (k, j) = h_k^H w_j."""
    return ch.h_C.conj() @ W


def _sinr_terms(alpha: np.ndarray, W: np.ndarray, ch: ChannelSet,
                cfg: SystemConfig) -> tuple[np.ndarray, np.ndarray]:
    """Desired power D_k and interference-plus-noise N_k per user."""
    pw = np.abs(_gains(W, ch)) ** 2 * alpha[None, :] ** 2
    d = np.diag(pw).copy()
    n = pw.sum(axis=1) - d + 4.0 * cfg.sigma_C2
    return d, n


def _aperture_excitation(alpha: np.ndarray, W: np.ndarray, theta: np.ndarray,
                         ch: ChannelSet) -> np.ndarray:
    """x = diag(theta) G W diag(alpha) s, the plate-side excitation."""
    return theta * (ch.G @ (W @ (alpha * ch.s)))


def _comm_combiners(alpha: np.ndarray, W: np.ndarray, ch: ChannelSet,
                    cfg: SystemConfig) -> np.ndarray:
    """Exact per-user MMSE combiners for the half-amplitude downlink."""
    p = _gains(W, ch)
    denom = 0.25 * (np.abs(p) ** 2 * alpha[None, :] ** 2).sum(axis=1) + cfg.sigma_C2
    return 0.5 * alpha * np.diag(p).conj() / denom


def comm_combiners_for(vars: DesignVariables, ch: ChannelSet,
                       cfg: SystemConfig) -> np.ndarray:
    return _comm_combiners(vars.alpha, vars.W, ch, cfg)


def comm_combiner(k: int, state: SolverState, ch: ChannelSet,
                  cfg: SystemConfig) -> complex:
    """MMSE combiner of user k at the current state."""
    return complex(_comm_combiners(state.alpha, state.W, ch, cfg)[k])


def sensing_combiner(state: SolverState, ch: ChannelSet,
                     cfg: SystemConfig) -> np.ndarray:
    """MMSE combiner of the echo receiver; minimizes the weighted sensing
    MSE for every positive-definite weight matrix."""
    x = _aperture_excitation(state.alpha, state.W, state.theta, ch)
    rx = ch.R_H @ x
    t = float(np.real(np.vdot(x, rx))) + 4.0 * cfg.N_R * cfg.sigma_S2
    return 2.0 * rx / t


def mse_comm(k: int, state: SolverState, ch: ChannelSet,
             cfg: SystemConfig) -> float:
    """Symbol-estimation MSE of user k at the state's combiner."""
    return float(_mse_comm_all(state, ch, cfg)[k])


def _mse_comm_all(state: SolverState, ch: ChannelSet,
                  cfg: SystemConfig) -> np.ndarray:
    g = 0.5 * _gains(state.W, ch) * state.alpha[None, :]   # (K, K)
    ug = state.u_C[:, None] * g
    err = np.abs(ug - np.eye(cfg.K)) ** 2
    return err.sum(axis=1) + cfg.sigma_C2 * np.abs(state.u_C) ** 2


def e_comm_mmse(alpha: np.ndarray, W: np.ndarray, ch: ChannelSet,
                cfg: SystemConfig) -> np.ndarray:
    """Per-user MMSE values (1 + D/N)^-1; the bridge -log2(e) equals the
    per-user mutual information for any feasible alpha."""
    d, n = _sinr_terms(alpha, W, ch, cfg)
    return 1.0 / (1.0 + d / n)


def mse_sensing(state: SolverState, ch: ChannelSet,
                cfg: SystemConfig) -> np.ndarray:
    """Target-response estimation error matrix at the state's combiner."""
    u = state.u_S
    x = _aperture_excitation(state.alpha, state.W, state.theta, ch)
    rx = ch.R_H @ x
    c = float(np.real(np.vdot(x, rx)))
    uu = np.outer(u, u.conj())
    e = (0.25 * c * uu
         - 0.5 * np.outer(u, rx.conj())
         - 0.5 * np.outer(rx, u.conj())
         + cfg.N_R * cfg.sigma_S2 * uu
         + ch.R_H)
    return 0.5 * (e + e.conj().T)


def mse_sensing_mmse(alpha: np.ndarray, W: np.ndarray, theta: np.ndarray,
                     ch: ChannelSet, cfg: SystemConfig) -> np.ndarray:
    """Sensing MSE matrix at the MMSE combiner (rank-one downdate of the
    prior covariance)."""
    x = _aperture_excitation(alpha, W, theta, ch)
    rx = ch.R_H @ x
    t = float(np.real(np.vdot(x, rx))) + 4.0 * cfg.N_R * cfg.sigma_S2
    e = ch.R_H - np.outer(rx, rx.conj()) / t
    return 0.5 * (e + e.conj().T)


def update_weights(state: SolverState, ch: ChannelSet,
                   cfg: SystemConfig) -> tuple[np.ndarray, np.ndarray]:
    """MSE weights as inverse MMSE values.

    The matrix weight is the closed-form inverse R^-1 + x x^H / (4 N_R
    sigma^2); it requires an invertible target covariance, so a zero
    diagonal loading is reported as a configuration error.
    """
    if cfg.delta_reg <= 0:
        raise ValueError("sensing MSE weight needs delta_reg > 0 "
                         "(target covariance must be invertible)")
    lam_c = 1.0 / e_comm_mmse(state.alpha, state.W, ch, cfg)
    x = _aperture_excitation(state.alpha, state.W, state.theta, ch)
    r_inv = np.linalg.solve(ch.R_H, np.eye(cfg.M))
    lam_s = r_inv + np.outer(x, x.conj()) / (4.0 * cfg.N_R * cfg.sigma_S2)
    if not np.all(np.isfinite(lam_s)):
        raise ValueError("singular sensing MSE matrix; check delta_reg")
    return lam_c, 0.5 * (lam_s + lam_s.conj().T)


# ---------------------------------------------------------------------------
# boundary penalty


def penalty(alpha_k, rho: float):
    """Entropy-style boundary penalty, zero exactly at 0 and 1."""
    a = np.asarray(alpha_k, dtype=float)
    if np.any(a < -1e-12) or np.any(a > 1 + 1e-12):
        raise ValueError("penalty argument must lie in [0, 1]")
    a = np.clip(a, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = rho * (np.where(a > 0, a * np.log(np.where(a > 0, a, 1.0)), 0.0)
                     + np.where(a < 1, (1 - a) * np.log(np.where(a < 1, 1 - a, 1.0)), 0.0))
    return float(val) if np.ndim(alpha_k) == 0 else val


def penalty_derivative(anchor, rho: float):
    """Slope of the penalty at an anchor clamped away from the boundary."""
    a = np.clip(np.asarray(anchor, dtype=float),
                PENALTY_ANCHOR_CLIP, 1.0 - PENALTY_ANCHOR_CLIP)
    val = rho * np.log(a / (1.0 - a))
    return float(val) if np.ndim(anchor) == 0 else val


def penalty_linearized(alpha_k, anchor, rho: float):
    """First-order expansion of the penalty around the clamped anchor."""
    a0 = np.clip(np.asarray(anchor, dtype=float),
                 PENALTY_ANCHOR_CLIP, 1.0 - PENALTY_ANCHOR_CLIP)
    val = penalty(a0, rho) + (np.asarray(alpha_k, dtype=float) - a0) * penalty_derivative(a0, rho)
    return float(val) if np.ndim(alpha_k) == 0 else val


# ---------------------------------------------------------------------------
# surrogate


def surrogate_value(state: SolverState, ch: ChannelSet, cfg: SystemConfig) -> float:
    """Weighted-MSE surrogate tracked by the inner loop (natural logs)."""
    total = -float(np.sum(penalty(state.alpha, cfg.rho)))
    if cfg.kappa > 0:
        e = _mse_comm_all(state, ch, cfg)
        total += cfg.kappa * float(np.sum(state.Lambda_C * e - np.log(state.Lambda_C)))
    if cfg.kappa < 1:
        es = mse_sensing(state, ch, cfg)
        sign, logdet = np.linalg.slogdet(state.Lambda_S)
        total += (1.0 - cfg.kappa) * (float(np.real(np.trace(state.Lambda_S @ es))) - logdet)
    return total


# ---------------------------------------------------------------------------
# joint (alpha, W) subproblem


class _SubproblemContext:
    """Constants of one subproblem call: weights, combiners, channel
    cascades, and the linearized-penalty slopes."""

    def __init__(self, state: SolverState, ch: ChannelSet, cfg: SystemConfig,
                 alpha_anchor: np.ndarray):
        self.cfg = cfg
        self.ch = ch
        self.u = state.u_C
        self.lam_c = state.Lambda_C
        self.u_s = state.u_S
        self.lam_s = state.Lambda_S
        self.theta = state.theta
        phi = state.theta[:, None] * ch.G                    # (M, N_T)
        self.phi = phi
        a_full = phi.conj().T @ ch.R_H @ phi
        self.A = 0.5 * (a_full + a_full.conj().T)            # (N_T, N_T)
        kap = cfg.kappa
        w8 = 0.25 * kap * self.lam_c * np.abs(self.u) ** 2
        b_c = (ch.h_C.T * w8) @ ch.h_C.conj()
        self.B_c = 0.5 * (b_c + b_c.conj().T)                # (N_T, N_T)
        self.sigma_u = float(np.real(np.vdot(self.u_s, self.lam_s @ self.u_s)))
        self.tau = (1.0 - kap) * 0.25 * self.sigma_u
        self.d_lin = phi.conj().T @ (ch.R_H @ (self.lam_s @ self.u_s))  # (N_T,)
        self.slopes = penalty_derivative(alpha_anchor, cfg.rho)
        # constants of the surrogate that do not involve (alpha, W)
        self.const = (kap * float(np.sum(self.lam_c * (1.0 + cfg.sigma_C2 * np.abs(self.u) ** 2)))
                      + (1.0 - kap) * (cfg.N_R * cfg.sigma_S2 * self.sigma_u
                                       + float(np.real(np.trace(self.lam_s @ ch.R_H)))))
        self.lam, self.U = np.linalg.eigh(self.B_c)
        self.lam = np.clip(self.lam, 0.0, None)
        self.UA = self.U.conj().T @ self.A @ self.U
        self.eye_nt = np.eye(self.UA.shape[0])
        self.warm_mu = 0.0

    def objective(self, alpha: np.ndarray, w: np.ndarray) -> float:
        """Exact subproblem objective: weighted MSEs plus the linearized
        penalty (constants included so values are comparable)."""
        cfg, ch = self.cfg, self.ch
        p = _gains(w, ch)
        quad_c = 0.25 * np.abs(self.u[:, None] * p) ** 2 * alpha[None, :] ** 2
        lin_c = alpha * np.real(self.u * np.diag(p))
        comm = cfg.kappa * float(np.sum(self.lam_c * quad_c.sum(axis=1))
                                 - np.sum(self.lam_c * lin_c))
        x = self.phi @ (w @ (alpha * ch.s))
        sens = (self.tau * float(np.real(np.vdot(x, ch.R_H @ x)))
                - (1.0 - cfg.kappa) * float(np.real(np.vdot(self.lam_s @ self.u_s, ch.R_H @ x))))
        pen = -float(np.sum(self.slopes * alpha))
        return comm + sens + pen + self.const

    # -- W block -----------------------------------------------------------

    def linear_coeffs(self, alpha: np.ndarray) -> np.ndarray:
        """Columns b_k of the linear term -Re{b_k^H w_k}."""
        cfg = self.cfg
        s_t = alpha * self.ch.s
        b = (cfg.kappa * self.lam_c * alpha * self.u.conj())[None, :] * self.ch.h_C.T
        b = b + (1.0 - cfg.kappa) * s_t.conj()[None, :] * self.d_lin[:, None]
        return b                                             # (N_T, K)

    def w_of_multipliers(self, alpha: np.ndarray, mults: np.ndarray,
                         ub: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Stationary precoder for given per-column multipliers.

        ub is the precomputed eigenbasis image of half the linear term. The
        cross-column coupling through the aperture excitation is eliminated
        in the eigenbasis of the common quadratic, leaving one dense solve
        of size N_T.
        """
        s_t = alpha * self.ch.s
        n_t = ub.shape[0]
        denom = alpha[None, :] ** 2 * self.lam[:, None] + mults[None, :]  # (N_T, K)
        # rank-aware pseudo-inverse: directions whose curvature is nothing
        # but eigenvalue noise are nulled, not inverted
        cut = 1e-12 * (alpha ** 2 * self.lam[-1] + mults)[None, :]
        inv = np.zeros_like(denom)
        good = denom > np.maximum(cut, 1e-300)
        inv[good] = 1.0 / denom[good]
        inv = inv * mask[None, :]
        if self.tau > 0 and np.any(np.abs(s_t) > 0):
            sd = (np.abs(s_t) ** 2)[None, :] * inv           # (N_T, K)
            lhs = self.eye_nt + self.tau * (sd.sum(axis=1)[:, None] * self.UA)
            rhs = (s_t[None, :] * inv * ub).sum(axis=1)
            y = np.linalg.solve(lhs, rhs)
            uax = self.UA @ y
            wy = inv * (ub - self.tau * s_t.conj()[None, :] * uax[:, None])
        else:
            wy = inv * ub
        return self.U @ wy


def _repair_feasible(w: np.ndarray, caps: np.ndarray, p_t: float) -> np.ndarray:
    """Scale columns onto their caps, then globally onto the power budget."""
    w = w.copy()
    p = np.sum(np.abs(w) ** 2, axis=0)
    over = p > caps * (1 + 1e-12)
    if np.any(over):
        shrink = np.ones_like(p)
        shrink[over] = np.sqrt(np.where(p[over] > 0, caps[over] / p[over], 1.0))
        w = w * shrink[None, :]
        p = np.sum(np.abs(w) ** 2, axis=0)
    total = p.sum()
    if total > p_t * (1 + 1e-12):
        w = w * np.sqrt(p_t / total)
    return w


def _solve_w_block(ctx: _SubproblemContext, alpha: np.ndarray,
                   w_in: np.ndarray) -> np.ndarray:
    """Exact minimization over the precoder at fixed scheduling weights.

    The KKT system is solved in closed form for given multipliers; the
    multiplier on the total power is found by bisection, and when per-user
    caps activate, the full multiplier vector is found by maximizing the
    concave dual. A final comparison against the incoming point guarantees
    the block never increases the objective.
    """
    cfg = ctx.cfg
    p_t = cfg.P_T
    caps = alpha * p_t
    mask = (alpha > ALPHA_ZERO_TOL).astype(float)
    ub = ctx.U.conj().T @ (0.5 * ctx.linear_coeffs(alpha))

    def powers(w):
        return np.sum(np.abs(w) ** 2, axis=0)

    def candidate(mults):
        return ctx.w_of_multipliers(alpha, mults, ub, mask)

    feas_tol = 1e-10 * p_t
    best_w = w_in
    best_j = ctx.objective(alpha, w_in)

    def consider(w):
        nonlocal best_w, best_j
        w = _repair_feasible(w, caps, p_t)
        j = ctx.objective(alpha, w)
        if j < best_j - 1e-15 * max(1.0, abs(best_j)):
            best_w, best_j = w, j

    # unconstrained stationary point
    mults = np.zeros(cfg.K)
    w0 = candidate(mults)
    p0 = powers(w0)
    if p0.sum() <= p_t + feas_tol and np.all(p0 <= caps + feas_tol):
        consider(w0)
        return best_w

    # total-power multiplier alone, bracketed around the last solution
    def total_power(mu):
        return powers(candidate(np.full(cfg.K, mu))).sum()

    mu_star = 0.0
    if p0.sum() > p_t + feas_tol:
        if ctx.warm_mu > 0 and total_power(ctx.warm_mu) <= p_t:
            mu_hi = ctx.warm_mu
            mu_lo = 0.5 * mu_hi
            for _ in range(60):
                if total_power(mu_lo) > p_t:
                    break
                mu_hi = mu_lo
                mu_lo *= 0.5
            else:
                mu_lo = 0.0
        else:
            mu_hi = max(ctx.warm_mu, 1.0)
            for _ in range(80):
                if total_power(mu_hi) <= p_t:
                    break
                mu_hi *= 2.0
            mu_lo = 0.0
        while mu_hi - mu_lo > 1e-13 * max(1.0, mu_hi):
            mu = 0.5 * (mu_lo + mu_hi)
            if total_power(mu) > p_t:
                mu_lo = mu
            else:
                mu_hi = mu
        ctx.warm_mu = mu_hi
        mu_star = mu_hi
        w_mu = candidate(np.full(cfg.K, mu_hi))
        if np.all(powers(w_mu) <= caps + feas_tol):
            consider(w_mu)
            return best_w

    # caps active: maximize the dual over all multipliers
    active = mask > 0

    def negative_dual(z):
        mu, nu = z[0], np.zeros(cfg.K)
        nu[active] = z[1:]
        mults = mu + nu
        w = candidate(mults)
        p = powers(w)
        val = (ctx.objective(alpha, w) + mu * (p.sum() - p_t)
               + float(np.sum(nu[active] * (p[active] - caps[active]))))
        grad = np.concatenate([[p.sum() - p_t], (p - caps)[active]])
        return -val, -grad

    z0 = np.concatenate([[mu_star], np.zeros(int(active.sum()))])
    res = sp_optimize.minimize(negative_dual, z0, jac=True, method="L-BFGS-B",
                               bounds=[(0.0, None)] * z0.size,
                               options={"maxiter": 300, "ftol": 1e-14,
                                        "gtol": 1e-10 * max(1.0, p_t)})
    mults = np.zeros(cfg.K)
    mults[active] = res.x[1:]
    mults += res.x[0]
    consider(candidate(mults))
    return best_w


def _solve_alpha_block(ctx: _SubproblemContext, alpha_in: np.ndarray,
                       w: np.ndarray) -> np.ndarray:
    """Exact minimization over the scheduling weights at a fixed precoder.

    Separable quadratics plus a coupled PSD quadratic from the echo term;
    solved by cyclic exact coordinate minimization under the box and the
    cap-induced lower bounds, with bisection on the cardinality multiplier.
    """
    cfg = ctx.cfg
    ch = ctx.ch
    k = cfg.K
    p = _gains(w, ch)
    # per-user quadratic and linear communication coefficients
    q_diag = np.real(np.einsum("nk,nm,mk->k", w.conj(), ctx.B_c, w))
    lin = -cfg.kappa * ctx.lam_c * np.real(ctx.u * np.diag(p))
    t_mat = ctx.phi @ (w * ch.s[None, :])                    # (M, K)
    q_s = ctx.tau * np.real(t_mat.conj().T @ ch.R_H @ t_mat)
    q_s = 0.5 * (q_s + q_s.T)
    lin = lin - (1.0 - cfg.kappa) * np.real((ctx.lam_s @ ctx.u_s).conj() @ (ch.R_H @ t_mat))
    lin = lin - ctx.slopes

    lo = np.minimum(np.sum(np.abs(w) ** 2, axis=0) / cfg.P_T, 1.0)
    hess = 2.0 * (q_diag + np.diag(q_s))
    lo_l = lo.tolist()
    lin_l = lin.tolist()
    hess_l = hess.tolist()
    qs_rows = [row for row in 2.0 * q_s]
    qs_diag = (2.0 * np.diag(q_s)).tolist()

    def coordinate_descent(nu, a_start):
        a = a_start.copy()
        for _ in range(400):
            delta = 0.0
            for i in range(k):
                cross = float(qs_rows[i] @ a) - qs_diag[i] * a[i]
                slope = lin_l[i] + nu + cross
                if hess_l[i] > 1e-30:
                    target = -slope / hess_l[i]
                else:
                    target = 0.0 if slope > 0 else 1.0
                new = min(max(target, lo_l[i]), 1.0)
                d = new - a[i]
                if d > delta:
                    delta = d
                elif -d > delta:
                    delta = -d
                a[i] = new
            if delta < 1e-13:
                break
        return a

    a0 = coordinate_descent(0.0, alpha_in)
    if a0.sum() <= cfg.N_S + 1e-10:
        alpha_new = a0
    else:
        nu_hi = 1.0
        for _ in range(60):
            if coordinate_descent(nu_hi, a0).sum() <= cfg.N_S:
                break
            nu_hi *= 2.0
        nu_lo = 0.0
        a_hi = coordinate_descent(nu_hi, a0)
        for _ in range(60):
            if cfg.N_S - a_hi.sum() <= 1e-11:
                break
            nu = 0.5 * (nu_lo + nu_hi)
            a_nu = coordinate_descent(nu, a_hi)
            if a_nu.sum() > cfg.N_S:
                nu_lo = nu
            else:
                nu_hi, a_hi = nu, a_nu
        alpha_new = a_hi

    if ctx.objective(alpha_new, w) <= ctx.objective(alpha_in, w):
        return alpha_new
    return alpha_in


def solve_joint_subproblem(state: SolverState, ch: ChannelSet, cfg: SystemConfig,
                           alpha_anchor: np.ndarray, *,
                           fix_alpha: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Solve the convex scheduling/precoding subproblem at fixed combiners
    and weights.

    Alternates exact precoder and scheduling-weight blocks until neither
    moves; the returned pair is feasible and never increases the tracked
    surrogate relative to the incoming point. Stagnation without a joint
    fixed point is reported and the best feasible iterate returned.
    """
    if cfg.P_T <= 0:
        raise ValueError("total power budget must be positive")
    ctx = _SubproblemContext(state, ch, cfg, alpha_anchor)
    alpha = state.alpha.copy()
    w = state.W.copy()
    converged = False
    j_prev = ctx.objective(alpha, w)
    for _ in range(SUBPROBLEM_MAX_ROUNDS):
        w_new = _solve_w_block(ctx, alpha, w)
        if fix_alpha:
            alpha_new = alpha
        else:
            alpha_new = _solve_alpha_block(ctx, alpha, w_new)
        dw = np.linalg.norm(w_new - w) / max(1.0, np.linalg.norm(w_new))
        da = float(np.max(np.abs(alpha_new - alpha))) if not fix_alpha else 0.0
        alpha, w = alpha_new, w_new
        j_now = ctx.objective(alpha, w)
        # blocks can creep along a flat valley long after the objective has
        # settled; treat sub-resolution objective motion as converged once
        # the variable drift is already small
        flat = (abs(j_prev - j_now) <= 1e-10 * max(1.0, abs(j_now))
                and max(dw, da) <= 1e-4)
        j_prev = j_now
        if (dw <= SUBPROBLEM_TOL and da <= SUBPROBLEM_TOL) or flat:
            converged = True
            break
    if not converged:
        warnings.warn("scheduling/precoding subproblem stagnated; "
                      "returning best feasible iterate")
    return alpha, w


# ---------------------------------------------------------------------------
# inner loop


def initialize_state(ch: ChannelSet, cfg: SystemConfig,
                     theta: np.ndarray) -> SolverState:
    """Matched-filter precoders at equal power, uniform scheduling weights,
    and consistent combiners and weights."""
    norms = np.linalg.norm(ch.h_C, axis=1)
    w = (ch.h_C / norms[:, None]).T * np.sqrt(cfg.P_T / cfg.K)
    alpha = np.full(cfg.K, cfg.N_S / cfg.K)
    state = SolverState(u_C=np.zeros(cfg.K, dtype=complex),
                        u_S=np.zeros(cfg.M, dtype=complex),
                        Lambda_C=np.ones(cfg.K),
                        Lambda_S=np.eye(cfg.M, dtype=complex),
                        alpha=alpha, W=w, theta=np.asarray(theta, dtype=complex))
    state.u_C = _comm_combiners(state.alpha, state.W, ch, cfg)
    state.u_S = sensing_combiner(state, ch, cfg)
    state.Lambda_C, state.Lambda_S = update_weights(state, ch, cfg)
    return state


def inner_loop(state0: SolverState, ch: ChannelSet, cfg: SystemConfig, *,
               fix_alpha: bool = False,
               record_blocks: bool = False) -> SolverState:
    """Sweep combiners, weights and the joint subproblem until the
    surrogate stalls or the sweep cap is reached.

    With record_blocks the surrogate value after every individual block
    update is kept on the returned state as ``block_surrogates``.
    """
    if cfg.p_max < 1:
        raise ValueError("need at least one sweep")
    state = SolverState(u_C=state0.u_C.copy(), u_S=state0.u_S.copy(),
                        Lambda_C=state0.Lambda_C.copy(),
                        Lambda_S=state0.Lambda_S.copy(),
                        alpha=state0.alpha.copy(), W=state0.W.copy(),
                        theta=state0.theta.copy())
    s_prev = surrogate_value(state, ch, cfg)
    state.surrogate_per_iter = [s_prev]
    blocks = [s_prev]

    def record():
        if record_blocks:
            blocks.append(surrogate_value(state, ch, cfg))

    for _ in range(cfg.p_max):
        anchor = state.alpha.copy()
        state.u_C = _comm_combiners(state.alpha, state.W, ch, cfg)
        record()
        state.u_S = sensing_combiner(state, ch, cfg)
        record()
        lam_c, lam_s = update_weights(state, ch, cfg)
        state.Lambda_C = lam_c
        record()
        state.Lambda_S = lam_s
        record()
        state.alpha, state.W = solve_joint_subproblem(
            state, ch, cfg, anchor, fix_alpha=fix_alpha)
        record()
        s_now = surrogate_value(state, ch, cfg)
        state.surrogate_per_iter.append(s_now)
        if abs(s_now - s_prev) <= cfg.epsilon * max(1.0, abs(s_prev)):
            s_prev = s_now
            break
        s_prev = s_now
    if record_blocks:
        state.block_surrogates = blocks
    return state


def round_schedule(alpha: np.ndarray, n_s: int) -> np.ndarray:
    """Harden relaxed scheduling weights: the n_s largest entries at or
    above one half become one, everything else zero; ties favor the lower
    user index."""
    alpha = np.asarray(alpha, dtype=float)
    out = np.zeros_like(alpha)
    order = np.argsort(-alpha, kind="stable")
    taken = 0
    for idx in order:
        if taken >= n_s:
            break
        if alpha[idx] >= 0.5:
            out[idx] = 1.0
            taken += 1
    return out
