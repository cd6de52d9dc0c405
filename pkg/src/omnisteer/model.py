"""Scenario configuration and physical-model construction.

Everything here is deterministic given a config and a seeded generator:
the array-to-plate coupling matrix, clustered user channels, the target
response statistics, steering vectors, and the symbol snapshot.
All powers are linear (watts); dB conversions happen at the CLI boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

# Ground-user angular sector for cluster centers, and the angular spread
# (standard deviation) of the Laplacian ray offsets around each center.
USER_SECTOR_RAD = (-np.pi / 3.0, np.pi / 3.0)
RAY_SPREAD_RAD = np.deg2rad(7.5)


def crandn(rng: np.random.Generator, *shape: int) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with unit variance."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def spawn_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent child generator for (seed, key).

    The same (seed, key) always yields the same stream, and distinct keys
    yield statistically independent streams, so trials and purposes can be
    seeded separately without coordination.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class SystemConfig:
    """All scenario parameters in linear units.

    Derived defaults: element spacing d = lambda/2, array-to-plate distance
    D = lambda, covariance loading delta_reg = 1e-3 * sigma_xi2. The dense
    regime K > N_S is the default; K = N_S is allowed for single-user
    protocols.
    """

    M: int = 16              # plate elements
    N_T: int = 16            # transmit antennas
    N_R: int = 16            # receive antennas
    K: int = 8               # candidate users
    N_S: int = 5             # scheduling capability
    N_cl: int = 4            # scattering clusters per user channel
    N_ray: int = 10          # rays per cluster
    P_T: float = 10.0        # total transmit power (W); 10 W = 40 dBm
    sigma_C2: float = 1.0    # downlink noise power (W)
    sigma_S2: float = 1.0    # echo noise power (W)
    kappa: float = 0.5       # weight between user links and sensing
    rho: float = 0.1         # boundary-penalty weight for scheduling
    epsilon: float = 0.01    # convergence tolerance shared by all loops
    carrier_freq: float = 3e9
    d: float | None = None   # element spacing (m)
    D: float | None = None   # array-to-plate distance (m)
    sigma_xi2: float = 1000.0  # target reflection power (two-way link budget)
    delta_reg: float | None = None  # diagonal loading of the target covariance
    i_max: int = 10          # outer iterations
    p_max: int = 30          # inner sweeps
    q_max: int = 300         # ascent iterations for the phase optimizer
    N_rand: int = 200        # randomization samples for the relaxation rounding
    seed: int = 0

    def __post_init__(self) -> None:
        lam = self.wavelength
        if self.d is None:
            object.__setattr__(self, "d", lam / 2.0)
        if self.D is None:
            object.__setattr__(self, "D", lam)
        if self.delta_reg is None:
            object.__setattr__(self, "delta_reg", 1e-3 * self.sigma_xi2)
        self._validate()

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    def _validate(self) -> None:
        def positive(name, value):
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value}")

        for name in ("M", "N_T", "N_R", "K", "N_S", "N_cl", "N_ray",
                     "i_max", "p_max", "q_max", "N_rand"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.K < self.N_S:
            raise ValueError(f"need K >= N_S, got K={self.K}, N_S={self.N_S}")
        for name in ("P_T", "sigma_C2", "sigma_S2", "rho", "epsilon",
                     "carrier_freq", "d", "D", "sigma_xi2"):
            positive(name, getattr(self, name))
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError(f"kappa must lie in [0, 1], got {self.kappa}")
        if self.delta_reg < 0:
            raise ValueError(f"delta_reg must be >= 0, got {self.delta_reg}")


@dataclass
class ChannelSet:
    """One realization of every channel quantity the solvers consume.

    h_C is stored row-per-user: row k holds the user-k channel vector, so
    ``h_C.conj() @ W`` gives the matrix of effective gains.
    """

    G: np.ndarray            # (M, N_T) array-to-plate coupling
    h_C: np.ndarray          # (K, N_T) downlink channels
    R_H: np.ndarray          # (M, M) target covariance, Hermitian PSD
    b_T: np.ndarray          # (M,) plate-side steering at the target
    b_R: np.ndarray          # (N_R,) receive steering at the target
    psi_target: float        # target angle (rad, local half-space coordinate)
    s: np.ndarray            # (K,) unit-modulus symbol snapshot


def build_array_to_plate_channel(cfg: SystemConfig) -> np.ndarray:
    """Spherical-wave LOS coupling between the array and the plate.

    Entry (m, n) is lambda / (4 pi r) * exp(-i 2 pi r / lambda) with
    r = sqrt(D^2 + ((m - n) d)^2), so the matrix is Toeplitz and symmetric.
    """
    lam = cfg.wavelength
    diff = np.arange(cfg.M)[:, None] - np.arange(cfg.N_T)[None, :]
    r = np.sqrt(cfg.D**2 + (diff * cfg.d) ** 2)
    return lam / (4.0 * np.pi * r) * np.exp(-2j * np.pi * r / lam)


def steering_vector(psi: float, n: int) -> np.ndarray:
    """Unit-norm half-wavelength ULA response at angle psi."""
    if n < 1:
        raise ValueError("steering vector needs at least one element")
    return np.exp(1j * np.pi * np.arange(n) * np.sin(psi)) / np.sqrt(n)


def build_comm_channel(angles: np.ndarray, gains: np.ndarray, n_t: int) -> np.ndarray:
    """Assemble a user channel from explicit ray angles and complex gains.

    Returns h such that h^H = sqrt(n_t / L) * sum_l gains[l] * a^H(angles[l]).
    """
    angles = np.asarray(angles, dtype=float).ravel()
    gains = np.asarray(gains, dtype=complex).ravel()
    if angles.shape != gains.shape:
        raise ValueError("angles and gains must have matching lengths")
    a = np.exp(1j * np.pi * np.sin(angles)[:, None] * np.arange(n_t)[None, :]) / np.sqrt(n_t)
    h = np.sqrt(n_t / angles.size) * (gains.conj() @ a)
    return h


def sample_comm_channel(cfg: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw one clustered multipath channel toward a ground user.

    Cluster centers are uniform on the ground sector; ray angles add a
    Laplacian offset with RAY_SPREAD_RAD standard deviation; ray gains are
    i.i.d. standard complex Gaussian.
    """
    lo, hi = USER_SECTOR_RAD
    centers = rng.uniform(lo, hi, size=cfg.N_cl)
    # Laplace with scale b has standard deviation b*sqrt(2).
    offsets = rng.laplace(0.0, RAY_SPREAD_RAD / np.sqrt(2.0), size=(cfg.N_cl, cfg.N_ray))
    angles = (centers[:, None] + offsets).ravel()
    gains = crandn(rng, cfg.N_cl * cfg.N_ray)
    return build_comm_channel(angles, gains, cfg.N_T)


def build_target_covariance(psi: float, cfg: SystemConfig) -> np.ndarray:
    """Rank-one steering covariance of the target response, plus loading."""
    b = steering_vector(psi, cfg.M)
    r = cfg.sigma_xi2 * np.outer(b, b.conj()) + cfg.delta_reg * np.eye(cfg.M)
    return 0.5 * (r + r.conj().T)


def sample_target_response(psi: float, cfg: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """One target response draw: complex gain times the steering outer product."""
    xi = np.sqrt(cfg.sigma_xi2) * crandn(rng)
    return xi * np.outer(steering_vector(psi, cfg.N_R), steering_vector(psi, cfg.M).conj())


def sample_symbols(k: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-modulus QPSK snapshot of length k."""
    return np.exp(1j * (np.pi / 4.0 + np.pi / 2.0 * rng.integers(0, 4, size=k)))


def build_channel_set(cfg: SystemConfig, psi_target: float,
                      rng: np.random.Generator) -> ChannelSet:
    """Generate one full channel realization for a target at psi_target."""
    h_c = np.stack([sample_comm_channel(cfg, rng) for _ in range(cfg.K)])
    return ChannelSet(
        G=build_array_to_plate_channel(cfg),
        h_C=h_c,
        R_H=build_target_covariance(psi_target, cfg),
        b_T=steering_vector(psi_target, cfg.M),
        b_R=steering_vector(psi_target, cfg.N_R),
        psi_target=float(psi_target),
        s=sample_symbols(cfg.K, rng),
    )


def los_channel_set(cfg: SystemConfig, user_angles: np.ndarray, psi_target: float,
                    rng: np.random.Generator) -> ChannelSet:
    """Channel realization with pure line-of-sight user channels.

    Used by the beampattern scenario, where beams must point at known user
    directions; each user channel is sqrt(N_T) times the array response at
    its angle.
    """
    user_angles = np.asarray(user_angles, dtype=float).ravel()
    if user_angles.size != cfg.K:
        raise ValueError(f"expected {cfg.K} user angles, got {user_angles.size}")
    h_c = np.stack([build_comm_channel(np.array([a]), np.array([1.0 + 0j]), cfg.N_T)
                    for a in user_angles])
    return ChannelSet(
        G=build_array_to_plate_channel(cfg),
        h_C=h_c,
        R_H=build_target_covariance(psi_target, cfg),
        b_T=steering_vector(psi_target, cfg.M),
        b_R=steering_vector(psi_target, cfg.N_R),
        psi_target=float(psi_target),
        s=sample_symbols(cfg.K, rng),
    )
