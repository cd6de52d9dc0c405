"""Performance evaluation: per-user and sensing mutual information, the
weighted sum objective, Monte-Carlo normalized estimation errors, and
transmit beampatterns."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import ChannelSet, SystemConfig, crandn, sample_symbols, steering_vector


@dataclass
class DesignVariables:
    """The optimization triple: scheduling weights, precoders, plate phases.

    mode tags which half-space the plate serves ("T" transmission toward the
    back half-space, "R" reflection toward the front); it does not change
    any coefficient-level math.
    """

    alpha: np.ndarray        # (K,) scheduling weights in [0, 1]
    W: np.ndarray            # (N_T, K) precoder columns
    theta: np.ndarray        # (M,) unit-modulus plate coefficients
    mode: str = "T"

    def v_s(self, G: np.ndarray) -> np.ndarray:
        """Equivalent sensing beamformer diag(theta) G W diag(alpha)."""
        return self.theta[:, None] * (G @ self.W) * self.alpha[None, :]


@dataclass
class MetricsReport:
    """Evaluated performance of one design. NMSE fields are None until a
    Monte-Carlo evaluation has been run."""

    mi_per_user: np.ndarray
    sensing_mi: float
    sum_objective: float
    sum_nmse: float | None = None
    comm_nmse: float | None = None
    sensing_nmse: float | None = None
    beampattern: list = field(default_factory=list)


def check_feasible(vars: DesignVariables, cfg: SystemConfig, atol: float = 1e-8) -> None:
    """Raise if the design violates power, modulus, box or cardinality limits."""
    if np.any(vars.alpha < -atol) or np.any(vars.alpha > 1 + atol):
        raise ValueError("scheduling weights outside [0, 1]")
    if np.max(np.abs(np.abs(vars.theta) - 1.0)) > 1e-9:
        raise ValueError("plate coefficients are not unit modulus")
    power = float(np.sum(vars.alpha * np.sum(np.abs(vars.W) ** 2, axis=0)))
    if power > cfg.P_T * (1 + 1e-6) + atol:
        raise ValueError(f"transmit power {power} exceeds budget {cfg.P_T}")
    rounded = np.all((vars.alpha < atol) | (vars.alpha > 1 - atol))
    if rounded and np.sum(vars.alpha > 0.5) > cfg.N_S:
        raise ValueError("more users scheduled than the cardinality limit")


def _effective_gains(vars: DesignVariables, ch: ChannelSet) -> np.ndarray:
    """Matrix of h_k^H w_j products, shape (K, K)."""
    return ch.h_C.conj() @ vars.W


def comm_mi_per_user(vars: DesignVariables, ch: ChannelSet, cfg: SystemConfig) -> np.ndarray:
    """Per-user mutual information in bits.

    The noise term carries the factor 4 because only half the radiated
    amplitude reaches the forward lobe.
    """
    p = _effective_gains(vars, ch)
    pw = np.abs(p) ** 2 * vars.alpha[None, :] ** 2
    desired = np.diag(pw)
    interference = pw.sum(axis=1) - desired
    return np.log2(1.0 + desired / (interference + 4.0 * cfg.sigma_C2))


def sensing_quadratic(vars: DesignVariables, ch: ChannelSet) -> float:
    """The echo quadratic form s^H V^H R V s (real, nonnegative)."""
    x = vars.v_s(ch.G) @ ch.s
    return float(np.real(np.vdot(x, ch.R_H @ x)))


def sensing_mi(vars: DesignVariables, ch: ChannelSet, cfg: SystemConfig) -> float:
    """Sensing mutual information in bits, scalar (rank-one) form."""
    gamma = sensing_quadratic(vars, ch) / (4.0 * cfg.N_R * cfg.sigma_S2)
    return float(np.log2(1.0 + gamma))


def sensing_mi_logdet(vars: DesignVariables, ch: ChannelSet, cfg: SystemConfig) -> float:
    """Sensing mutual information via the log-determinant form.

    Mathematically identical to sensing_mi; kept as an independent route
    for identity checks.
    """
    x = vars.v_s(ch.G) @ ch.s
    a = 1.0 / (4.0 * cfg.N_R * cfg.sigma_S2)
    m = np.eye(ch.R_H.shape[0]) + a * np.outer(x, x.conj()) @ ch.R_H
    sign, logdet = np.linalg.slogdet(m)
    return float(np.real(np.log2(sign) + logdet / np.log(2.0)))


def sum_objective(vars: DesignVariables, ch: ChannelSet, cfg: SystemConfig) -> float:
    """Weighted sum of user MI and sensing MI (bits)."""
    return float(cfg.kappa * comm_mi_per_user(vars, ch, cfg).sum()
                 + (1.0 - cfg.kappa) * sensing_mi(vars, ch, cfg))


def sum_nmse(vars: DesignVariables, ch: ChannelSet, cfg: SystemConfig,
             trials: int, rng: np.random.Generator,
             u_comm: np.ndarray | None = None,
             chunk: int = 2048) -> tuple[float, float, float]:
    """Monte-Carlo normalized estimation errors, (sum, comm, sensing).

    Symbol estimates use the per-user combiners; the target-response
    estimate uses the echo combiner recomputed per draw since it depends on
    the known symbol vector. Communication errors are averaged over
    scheduled users only. Expectations run over fresh symbols, noise, and
    the target gain.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if u_comm is None:
        from .wmmse import comm_combiners_for  # local import avoids a cycle
        u_comm = comm_combiners_for(vars, ch, cfg)

    sched = vars.alpha > 0.5
    n_sched = int(np.count_nonzero(sched))
    pw = _effective_gains(vars, ch) * vars.alpha[None, :]   # (K, K)
    vs = vars.v_s(ch.G)                                     # (M, K)
    n_r = cfg.N_R

    comm_err = 0.0
    comm_den = 0.0
    sens_err = 0.0
    sens_den = 0.0
    done = 0
    while done < trials:
        t = min(chunk, trials - done)
        done += t
        s = np.stack([sample_symbols(cfg.K, rng) for _ in range(t)])  # (t, K)

        if n_sched > 0:
            y = 0.5 * s @ pw.T + np.sqrt(cfg.sigma_C2) * crandn(rng, t, cfg.K)
            s_hat = y * u_comm[None, :]
            comm_err += float(np.sum(np.abs(s_hat[:, sched] - s[:, sched]) ** 2))
            comm_den += float(t * n_sched)

        x = vs @ s.T                                         # (M, t)
        rx = ch.R_H @ x
        c = np.real(np.einsum("mt,mt->t", x.conj(), rx))
        u = 2.0 * rx / (c + 4.0 * n_r * cfg.sigma_S2)[None, :]
        xi = np.sqrt(cfg.sigma_xi2) * crandn(rng, t)
        z = np.sqrt(cfg.sigma_S2) * crandn(rng, t, n_r)
        # y_S^H = (1/2) conj(xi) conj(b_T^H x) b_R^H + z^H; the estimate is
        # u y_S^H and the target is conj(xi) b_T b_R^H, so the Frobenius
        # error expands over the rank-one pieces without forming matrices.
        bx = ch.b_T.conj() @ x                               # (t,)
        v = (0.5 * xi.conj() * bx.conj())[None, :] * u - xi.conj()[None, :] * ch.b_T[:, None]
        b_norm2 = float(np.real(np.vdot(ch.b_R, ch.b_R)))
        u_norm2 = np.real(np.einsum("mt,mt->t", u.conj(), u))
        v_norm2 = np.real(np.einsum("mt,mt->t", v.conj(), v))
        z_norm2 = np.real(np.einsum("tr,tr->t", z.conj(), z))
        bz = z.conj() @ ch.b_R                               # b_R^H z per draw
        uv = np.einsum("mt,mt->t", u.conj(), v)
        sens_err += float(np.sum(b_norm2 * v_norm2 + z_norm2 * u_norm2
                                 + 2.0 * np.real(bz * uv)))
        sens_den += float(np.sum(np.abs(xi) ** 2))

    comm = comm_err / comm_den if comm_den > 0 else 0.0
    sens = sens_err / sens_den
    return comm + sens, comm, sens


def beampattern(vars: DesignVariables, ch: ChannelSet, cfg: SystemConfig,
                angles: np.ndarray, side: str) -> np.ndarray:
    """Normalized radiated power over an angle grid, shape (n, 2).

    forward evaluates the array aperture directly; backward evaluates the
    cascade through the plate. The pattern is scaled so its peak is one;
    an all-zero pattern is returned unscaled with a warning.
    """
    angles = np.asarray(angles, dtype=float).ravel()
    if angles.size == 0:
        raise ValueError("angle grid must be nonempty")
    if side == "forward":
        n = cfg.N_T
        cols = vars.W
    elif side == "backward":
        n = cfg.M
        cols = vars.theta[:, None] * (ch.G @ vars.W)
    else:
        raise ValueError(f"side must be 'forward' or 'backward', got {side!r}")
    a = np.exp(1j * np.pi * np.sin(angles)[:, None] * np.arange(n)[None, :]) / np.sqrt(n)
    e = a.conj() @ cols                       # (n_angles, K)
    power = (np.abs(e) ** 2 * vars.alpha[None, :]).sum(axis=1)
    peak = power.max()
    if peak > 0:
        power = power / peak
    else:
        warnings.warn("all-zero beampattern; normalization skipped")
    return np.column_stack([angles, power])
