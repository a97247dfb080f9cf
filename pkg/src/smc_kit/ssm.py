"""State-space model abstraction, particle clouds, weight handling, resampling.

Weight arithmetic happens in the log domain with max-subtraction; a cloud
stores the resulting *normalized* linear weights (which is also what the CSV
dump format carries, so round trips are bit-exact).
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .stochastics import RngStream

__all__ = [
    "DegeneracyError",
    "ParticleCloud",
    "RegimeSet",
    "StateSpaceModel",
    "normalize_log_weights",
    "resample",
    "posterior_mean",
    "effective_sample_size",
    "cloud_to_csv",
    "cloud_from_csv",
]


class DegeneracyError(RuntimeError):
    """All particle weights collapsed to zero (likelihood underflow) at time ``k``."""

    def __init__(self, k: int, where: str = "weights"):
        self.k = int(k)
        self.where = where
        super().__init__(f"all {where} vanished at time index k={k}")


def normalize_log_weights(raw: np.ndarray, k: int = -1) -> np.ndarray:
    """Normalize log-weights into linear weights summing to 1.

    Subtracts the max before exponentiating, so any common additive constant
    (likelihoods known up to a multiplicative factor) and arbitrarily small
    magnitudes are harmless. Raises :class:`DegeneracyError` when every entry
    is ``-inf``.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.size == 0:
        raise ValueError("need at least one weight")
    m = raw.max()
    if m == -np.inf or np.isnan(m):
        raise DegeneracyError(k)
    w = np.exp(raw - m)
    return w / w.sum()


@dataclass
class ParticleCloud:
    """N weighted state vectors at one time index, optionally carrying regime labels."""

    k: int
    particles: np.ndarray  # (N, n)
    weights: np.ndarray  # (N,), normalized
    regimes: np.ndarray | None = None  # (N,) regime values, when a robust filter runs

    def __post_init__(self):
        self.particles = np.atleast_2d(np.asarray(self.particles, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.particles.shape[0] != self.weights.shape[0]:
            raise ValueError("particles and weights disagree on N")
        if self.particles.shape[0] < 1:
            raise ValueError("a cloud needs at least one particle")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1 within 1e-9, got {self.weights.sum()!r}")
        if self.regimes is not None:
            self.regimes = np.asarray(self.regimes, dtype=float)
            if self.regimes.shape[0] != self.particles.shape[0]:
                raise ValueError("regime labels and particles disagree on N")

    @property
    def n_particles(self) -> int:
        return self.particles.shape[0]

    @property
    def state_dim(self) -> int:
        return self.particles.shape[1]

    @classmethod
    def uniform(cls, k, particles, regimes=None) -> "ParticleCloud":
        n = np.atleast_2d(particles).shape[0]
        return cls(k, particles, np.full(n, 1.0 / n), regimes)


class RegimeSet:
    """Finite set of state-model parameterizations (here: scalar process-noise scales)."""

    def __init__(self, values):
        vals = [float(v) for v in values]
        if not vals:
            raise ValueError("regime set must be nonempty")
        if len(set(vals)) != len(vals):
            raise ValueError(f"regime set has duplicate values: {vals}")
        self.values = np.asarray(vals, dtype=float)

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __repr__(self) -> str:
        return f"RegimeSet({list(self.values)})"


class StateSpaceModel:
    """Behavioral interface every filter runs against.

    Core contract (all filters):
      ``sample_initial``, ``sample_transition``, ``transition_mean``,
      ``log_likelihood``. State arguments are ``(N, state_dim)`` arrays;
      likelihoods return ``(N,)`` log-values, finite for finite states
      (``-inf`` only where the density is exactly zero). ``regime`` is a
      scalar or per-particle array substituting the model's transition
      parameter; ``None`` means the nominal parameter.

    Kalman-family extras (optional): ``transition_jacobian``,
    ``observation_mean``, ``observation_jacobian``, ``process_cov`` (the
    effective noise covariance g Q g*), ``obs_cov``, ``initial_moments``.

    Compiled-kernel hooks (optional): ``kernel_propagate``, ``kernel_mean``,
    ``kernel_loglik`` are numba-jitted row functions sharing ``kernel_params``;
    models providing them run through the fast filter loops.
    """

    state_dim: int
    obs_dim: int
    noise_dim: int
    nominal_regime: float

    # compiled hooks; None means only the pure-python filter backend works
    kernel_propagate = None
    kernel_mean = None
    kernel_loglik = None
    kernel_params: np.ndarray | None = None

    def sample_initial(self, rng: RngStream, n: int) -> np.ndarray:
        raise NotImplementedError

    def sample_transition(self, k: int, x_prev: np.ndarray, rng: RngStream, regime=None) -> np.ndarray:
        raise NotImplementedError

    def transition_mean(self, k: int, x_prev: np.ndarray, regime=None) -> np.ndarray:
        raise NotImplementedError

    def log_likelihood(self, k: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # Kalman-family extras
    def initial_moments(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError(f"{type(self).__name__} has no Gaussian initialization")

    def transition_jacobian(self, k: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} provides no transition Jacobian")

    def observation_mean(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} provides no observation mean")

    def observation_jacobian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} provides no observation Jacobian")

    def process_cov(self, k: int) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} provides no process covariance")

    def obs_cov(self, k: int) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} provides no observation covariance")


def posterior_mean(cloud: ParticleCloud) -> np.ndarray:
    """Weighted average of the particles (the estimator fed into the RMSE)."""
    return cloud.weights @ cloud.particles


def effective_sample_size(cloud: ParticleCloud) -> float:
    """1 / sum(w_i^2); lies in [1, N] and measures weight concentration."""
    return float(1.0 / np.sum(cloud.weights**2))


def multinomial_indices(weights: np.ndarray, n: int, rng: RngStream) -> np.ndarray:
    """n i.i.d. ancestor indices drawn from the weight vector."""
    cum = np.cumsum(weights)
    cum[-1] = max(cum[-1], 1.0)
    return np.searchsorted(cum, rng.uniform(n), side="left")


def systematic_indices(weights: np.ndarray, n: int, rng: RngStream) -> np.ndarray:
    """Stratified-inversion ancestor indices from a single uniform offset."""
    cum = np.cumsum(weights)
    cum[-1] = max(cum[-1], 1.0)
    u = (float(rng.uniform()) + np.arange(n)) / n
    return np.searchsorted(cum, u, side="left")


def resample(cloud: ParticleCloud, rng: RngStream, scheme: str = "multinomial") -> ParticleCloud:
    """Redraw N particles from the weighted cloud; output weights are uniform.

    Regime labels, when present, travel with their particles.
    """
    n = cloud.n_particles
    if scheme == "multinomial":
        idx = multinomial_indices(cloud.weights, n, rng)
    elif scheme == "systematic":
        idx = systematic_indices(cloud.weights, n, rng)
    else:
        raise ValueError(f"unknown resampling scheme {scheme!r}")
    regimes = cloud.regimes[idx] if cloud.regimes is not None else None
    return ParticleCloud.uniform(cloud.k, cloud.particles[idx], regimes)


def cloud_to_csv(cloud: ParticleCloud) -> str:
    """Debug dump: ``k,i,weight,x0,...,x{n-1}[,regime]``; floats use repr (bit-exact)."""
    n = cloud.state_dim
    cols = ["k", "i", "weight"] + [f"x{j}" for j in range(n)]
    if cloud.regimes is not None:
        cols.append("regime")
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for i in range(cloud.n_particles):
        row = [str(cloud.k), str(i), repr(float(cloud.weights[i]))]
        row += [repr(float(v)) for v in cloud.particles[i]]
        if cloud.regimes is not None:
            row.append(repr(float(cloud.regimes[i])))
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def cloud_from_csv(text: str) -> ParticleCloud:
    """Parse the :func:`cloud_to_csv` format back into a cloud."""
    lines = [ln for ln in text.strip().splitlines() if ln]
    header = lines[0].split(",")
    has_regime = header[-1] == "regime"
    state_cols = len(header) - 3 - (1 if has_regime else 0)
    k = 0
    weights, particles, regimes = [], [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        k = int(parts[0])
        weights.append(float(parts[2]))
        particles.append([float(v) for v in parts[3 : 3 + state_cols]])
        if has_regime:
            regimes.append(float(parts[-1]))
    return ParticleCloud(
        k,
        np.asarray(particles),
        np.asarray(weights),
        np.asarray(regimes) if has_regime else None,
    )
