import numpy as np
import pytest

from omnisteer.metrics import DesignVariables
from omnisteer.model import ChannelSet, SystemConfig, crandn, sample_symbols


def make_cfg(**kw):
    """Small desk-scale config for unit tests."""
    base = dict(M=8, N_T=8, N_R=8, K=4, N_S=2, N_cl=2, N_ray=3, q_max=300)
    base.update(kw)
    return SystemConfig(**base)


def raw_channel_set(G, h_rows, R_H, b_T, b_R, psi, s):
    """ChannelSet from explicit arrays, for hand-built scenarios."""
    return ChannelSet(G=np.atleast_2d(np.asarray(G, complex)),
                      h_C=np.atleast_2d(np.asarray(h_rows, complex)),
                      R_H=np.atleast_2d(np.asarray(R_H, complex)),
                      b_T=np.asarray(b_T, complex).ravel(),
                      b_R=np.asarray(b_R, complex).ravel(),
                      psi_target=float(psi),
                      s=np.asarray(s, complex).ravel())


def scalar_channel_set(h=2.0 + 0j, g=1.0 + 0j, r=1.0, s=1.0 + 0j):
    """All dimensions one; h is the user channel entry, g the plate
    coupling, r the target covariance."""
    return raw_channel_set([[g]], [[h]], [[r]], [1.0], [1.0], 0.0, [s])


def random_feasible_design(cfg, ch, rng, binary_alpha=False):
    """Random design satisfying power, modulus and box constraints."""
    if binary_alpha:
        alpha = np.zeros(cfg.K)
        alpha[rng.choice(cfg.K, size=cfg.N_S, replace=False)] = 1.0
    else:
        alpha = rng.uniform(0.05, 1.0, cfg.K)
        if alpha.sum() > cfg.N_S:
            alpha *= cfg.N_S / alpha.sum()
    w = crandn(rng, cfg.N_T, cfg.K)
    used = np.sum(alpha * np.sum(np.abs(w) ** 2, axis=0))
    w *= np.sqrt(0.9 * cfg.P_T / used)
    # honor the per-user caps used by the decoupled formulation
    p = np.sum(np.abs(w) ** 2, axis=0)
    over = p > alpha * cfg.P_T
    if np.any(over):
        w[:, over] *= np.sqrt((alpha * cfg.P_T)[over] / p[over])
    theta = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, cfg.M))
    return DesignVariables(alpha=alpha, W=w, theta=theta)


def random_psd(rng, m, rank=None):
    a = crandn(rng, m, rank or m)
    c = a @ a.conj().T
    return 0.5 * (c + c.conj().T)
