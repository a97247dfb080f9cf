"""The two benchmark models, a linear-Gaussian test model, and trajectory simulators.

Model 1: the classic scalar nonlinear growth model, observed through x^2/20
(sign-ambiguous observations). Model 2: planar constant-velocity motion
observed through its azimuth only, with wrapped-Cauchy bearing noise.

Each model carries vectorized numpy methods (the :class:`~smc_kit.ssm.StateSpaceModel`
interface) plus numba-jitted row callbacks consumed by the compiled filter
loops; the two are pinned to each other by tests.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .ssm import StateSpaceModel
from .stochastics import RngStream, WrappedCauchyParams, cholesky_psd, wrap_angle, wrapped_cauchy_sample

__all__ = [
    "Model1Spec",
    "Model2Spec",
    "ScenarioSpec",
    "GrowthModel",
    "BearingsOnlyModel",
    "LinearGaussianModel",
    "model1_mean",
    "model1_obs_mean",
    "bearing",
    "simulate_model1",
    "simulate_model2",
    "trajectory_to_csv",
    "MODEL2_F",
    "MODEL2_G",
]

log = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)

MODEL2_F = np.array(
    [
        [1.0, 0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 1.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
)
MODEL2_G = np.array(
    [
        [0.5, 0.0],
        [0.0, 0.5],
        [1.0, 0.0],
        [0.0, 1.0],
    ]
)


def model1_mean(x, k):
    """Transition mean x/2 + 25x/(1+x^2) + 8 cos(1.2 (k-1)) of the scalar model."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * x + 25.0 * x / (1.0 + x * x) + 8.0 * math.cos(1.2 * (k - 1))
    return float(out) if out.ndim == 0 else out


def model1_obs_mean(x):
    """Observation mean x^2/20 (even in x: the source of the sign ambiguity)."""
    x = np.asarray(x, dtype=float)
    out = x * x / 20.0
    return float(out) if out.ndim == 0 else out


def bearing(x):
    """Full-quadrant azimuth of position (x[0], x[1]), measured from the +x2 axis, in [-pi, pi)."""
    x = np.asarray(x, dtype=float)
    x1 = x[..., 0]
    x2 = x[..., 1]
    if np.any((x1 == 0.0) & (x2 == 0.0)):
        raise ValueError("bearing is undefined at the origin")
    out = wrap_angle(np.arctan2(x1, x2))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# numba row callbacks (shared by the compiled filter loops)
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _m1_propagate(out, x, k, regime, noise, params):
    out[0] = (
        0.5 * x[0]
        + 25.0 * x[0] / (1.0 + x[0] * x[0])
        + 8.0 * np.cos(1.2 * (k - 1))
        + regime * noise[0]
    )


@njit(cache=True, inline="always")
def _m1_mean(out, x, k, regime, params):
    out[0] = 0.5 * x[0] + 25.0 * x[0] / (1.0 + x[0] * x[0]) + 8.0 * np.cos(1.2 * (k - 1))


@njit(cache=True, inline="always")
def _m1_loglik(x, y, k, params):
    v = params[0]
    r = y[0] - x[0] * x[0] / 20.0
    return -0.5 * (r * r / v + np.log(2.0 * np.pi * v))


@njit(cache=True, inline="always")
def _m2_propagate(out, x, k, regime, noise, params):
    out[0] = x[0] + x[2] + regime * 0.5 * noise[0]
    out[1] = x[1] + x[3] + regime * 0.5 * noise[1]
    out[2] = x[2] + regime * noise[0]
    out[3] = x[3] + regime * noise[1]


@njit(cache=True, inline="always")
def _m2_mean(out, x, k, regime, params):
    out[0] = x[0] + x[2]
    out[1] = x[1] + x[3]
    out[2] = x[2]
    out[3] = x[3]


@njit(cache=True, inline="always")
def _m2_loglik(x, y, k, params):
    # denominator in the cancellation-free form (1-rho)^2 + 4 rho sin^2(d/2)
    rho = params[0]
    mu = np.arctan2(x[0], x[1])
    half = 0.5 * (y[0] - mu)
    s = np.sin(half)
    return (
        np.log1p(-rho)
        + np.log1p(rho)
        - np.log(2.0 * np.pi)
        - np.log((1.0 - rho) ** 2 + 4.0 * rho * s * s)
    )


@njit(cache=True, inline="always")
def _lg_propagate(out, x, k, regime, noise, params):
    n = int(params[0])
    m = int(params[2])
    base = 3
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += params[base + i * n + j] * x[j]
        for j in range(m):
            acc += regime * params[base + n * n + i * m + j] * noise[j]
        out[i] = acc


@njit(cache=True, inline="always")
def _lg_mean(out, x, k, regime, params):
    n = int(params[0])
    base = 3
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += params[base + i * n + j] * x[j]
        out[i] = acc


@njit(cache=True, inline="always")
def _lg_loglik(x, y, k, params):
    n = int(params[0])
    d = int(params[1])
    m = int(params[2])
    hbase = 3 + n * n + n * m
    ribase = hbase + d * n
    q = 0.0
    for i in range(d):
        ri = y[i]
        for j in range(n):
            ri -= params[hbase + i * n + j] * x[j]
        for i2 in range(d):
            r2 = y[i2]
            for j in range(n):
                r2 -= params[hbase + i2 * n + j] * x[j]
            q += ri * params[ribase + i * d + i2] * r2
    return -0.5 * q + params[ribase + d * d]


# ---------------------------------------------------------------------------
# model classes
# ---------------------------------------------------------------------------

class GrowthModel(StateSpaceModel):
    """Scalar nonlinear growth model with quadratic observation (model "m1")."""

    state_dim = 1
    obs_dim = 1
    noise_dim = 1

    kernel_propagate = staticmethod(_m1_propagate)
    kernel_mean = staticmethod(_m1_mean)
    kernel_loglik = staticmethod(_m1_loglik)

    def __init__(self, process_std: float = 3.0, obs_std: float = 1.0,
                 init_mean: float = 0.0, init_std: float = 1.0):
        self.process_std = float(process_std)
        self.obs_std = float(obs_std)
        self.init_mean = float(init_mean)
        self.init_std = float(init_std)
        self.nominal_regime = self.process_std
        self.kernel_params = np.array([self.obs_std**2])

    def sample_initial(self, rng: RngStream, n: int) -> np.ndarray:
        return self.init_mean + self.init_std * rng.normal((n, 1))

    def sample_transition(self, k, x_prev, rng, regime=None):
        sig = self.process_std if regime is None else np.asarray(regime, dtype=float)
        x_prev = np.atleast_2d(x_prev)
        noise = rng.normal(x_prev.shape)
        scaled = noise * np.reshape(sig, (-1, 1)) if np.ndim(sig) else sig * noise
        return model1_mean(x_prev, k) + scaled

    def transition_mean(self, k, x_prev, regime=None):
        return model1_mean(np.atleast_2d(x_prev), k)

    def log_likelihood(self, k, x, y):
        x = np.atleast_2d(x)
        r = float(np.asarray(y).reshape(-1)[0]) - model1_obs_mean(x[:, 0])
        v = self.obs_std**2
        return -0.5 * (r * r / v + math.log(2.0 * math.pi * v))

    # Kalman-family extras
    def initial_moments(self):
        return np.array([self.init_mean]), np.array([[self.init_std**2]])

    def transition_jacobian(self, k, x):
        x0 = float(np.asarray(x).reshape(-1)[0])
        return np.array([[0.5 + 25.0 * (1.0 - x0 * x0) / (1.0 + x0 * x0) ** 2]])

    def observation_mean(self, x):
        x = np.atleast_2d(x)
        return model1_obs_mean(x[:, :1])

    def observation_jacobian(self, x):
        x0 = float(np.asarray(x).reshape(-1)[0])
        return np.array([[x0 / 10.0]])

    def process_cov(self, k):
        return np.array([[self.process_std**2]])

    def obs_cov(self, k):
        return np.array([[self.obs_std**2]])


class BearingsOnlyModel(StateSpaceModel):
    """Planar constant-velocity target observed through its azimuth only (model "m2").

    The transition parameter (regime) is the process-noise scale; the
    observation is wrapped Cauchy around the bearing with mean resultant
    length ``rho``. ``gaussian_obs=True`` opts in to a Gaussian bearing
    approximation of matched circular variance so the Kalman-family filters
    can run on this model too (they are known to behave poorly here).
    """

    state_dim = 4
    obs_dim = 1
    noise_dim = 2

    kernel_propagate = staticmethod(_m2_propagate)
    kernel_mean = staticmethod(_m2_mean)
    kernel_loglik = staticmethod(_m2_loglik)

    def __init__(self, sigma_w: float = 0.001, rho: float = 1.0 - 0.005**2,
                 x0_mean=None, x0_cov=None, gaussian_obs: bool = False):
        if not 0.0 <= rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {rho}")
        self.sigma_w = float(sigma_w)
        self.rho = float(rho)
        self.x0_mean = np.array([-0.05, 0.2, 0.001, -0.055]) if x0_mean is None else np.asarray(x0_mean, float)
        self.x0_cov = (
            0.01 * np.diag([0.5**2, 0.3**2, 0.005**2, 0.01**2])
            if x0_cov is None
            else np.asarray(x0_cov, float)
        )
        self.gaussian_obs = bool(gaussian_obs)
        self.nominal_regime = self.sigma_w
        self.kernel_params = np.array([self.rho])
        self._x0_chol = cholesky_psd(self.x0_cov)

    def sample_initial(self, rng: RngStream, n: int) -> np.ndarray:
        return self.x0_mean + rng.normal((n, 4)) @ self._x0_chol.T

    def sample_transition(self, k, x_prev, rng, regime=None):
        sig = self.sigma_w if regime is None else np.asarray(regime, dtype=float)
        x_prev = np.atleast_2d(x_prev)
        noise = rng.normal((x_prev.shape[0], 2))
        scaled = noise * np.reshape(sig, (-1, 1)) if np.ndim(sig) else sig * noise
        return x_prev @ MODEL2_F.T + scaled @ MODEL2_G.T

    def transition_mean(self, k, x_prev, regime=None):
        return np.atleast_2d(x_prev) @ MODEL2_F.T

    def log_likelihood(self, k, x, y):
        x = np.atleast_2d(x)
        mu = bearing(x)
        yv = float(np.asarray(y).reshape(-1)[0])
        rho = self.rho
        half = 0.5 * (yv - mu)
        return (
            math.log1p(-rho)
            + math.log1p(rho)
            - _LOG_2PI
            - np.log((1.0 - rho) ** 2 + 4.0 * rho * np.sin(half) ** 2)
        )

    # Kalman-family extras (Gaussian bearing approximation, explicit opt-in)
    def _require_gaussian_obs(self):
        if not self.gaussian_obs:
            raise NotImplementedError(
                "Kalman-family filters on the bearings-only model require gaussian_obs=True"
            )

    def initial_moments(self):
        return self.x0_mean.copy(), self.x0_cov.copy()

    def transition_jacobian(self, k, x):
        return MODEL2_F.copy()

    def observation_mean(self, x):
        self._require_gaussian_obs()
        x = np.atleast_2d(x)
        return np.reshape(bearing(x), (-1, 1))

    def observation_jacobian(self, x):
        self._require_gaussian_obs()
        x = np.asarray(x).reshape(-1)
        r2 = x[0] ** 2 + x[1] ** 2
        return np.array([[x[1] / r2, -x[0] / r2, 0.0, 0.0]])

    def innovation(self, y, y_pred):
        return wrap_angle(np.asarray(y) - np.asarray(y_pred))

    def process_cov(self, k):
        return self.sigma_w**2 * (MODEL2_G @ MODEL2_G.T)

    def obs_cov(self, k):
        self._require_gaussian_obs()
        return np.array([[-2.0 * math.log(self.rho)]])


class LinearGaussianModel(StateSpaceModel):
    """X_k = F X_{k-1} + L w, Y_k = H X_k + v: the conjugate test model.

    ``chol_q`` is a matrix square root of the effective process covariance;
    the regime parameter scales it (nominal 1).
    """

    def __init__(self, F, chol_q, H, R, x0_mean, x0_cov):
        self.F = np.atleast_2d(np.asarray(F, float))
        self.chol_q = np.atleast_2d(np.asarray(chol_q, float))
        self.H = np.atleast_2d(np.asarray(H, float))
        self.R = np.atleast_2d(np.asarray(R, float))
        self.x0_mean = np.atleast_1d(np.asarray(x0_mean, float))
        self.x0_cov = np.atleast_2d(np.asarray(x0_cov, float))
        self.state_dim = self.F.shape[0]
        self.obs_dim = self.H.shape[0]
        self.noise_dim = self.chol_q.shape[1]
        self.nominal_regime = 1.0
        self._x0_chol = cholesky_psd(self.x0_cov)
        self._r_inv = np.linalg.inv(self.R)
        self._lognorm = -0.5 * (self.obs_dim * _LOG_2PI + math.log(np.linalg.det(self.R)))
        self.kernel_params = np.concatenate(
            [
                [self.state_dim, self.obs_dim, self.noise_dim],
                self.F.ravel(),
                self.chol_q.ravel(),
                self.H.ravel(),
                self._r_inv.ravel(),
                [self._lognorm],
            ]
        )

    kernel_propagate = staticmethod(_lg_propagate)
    kernel_mean = staticmethod(_lg_mean)
    kernel_loglik = staticmethod(_lg_loglik)

    def sample_initial(self, rng: RngStream, n: int) -> np.ndarray:
        return self.x0_mean + rng.normal((n, self.state_dim)) @ self._x0_chol.T

    def sample_transition(self, k, x_prev, rng, regime=None):
        sig = 1.0 if regime is None else np.asarray(regime, dtype=float)
        x_prev = np.atleast_2d(x_prev)
        noise = rng.normal((x_prev.shape[0], self.noise_dim))
        scaled = noise * np.reshape(sig, (-1, 1)) if np.ndim(sig) else sig * noise
        return x_prev @ self.F.T + scaled @ self.chol_q.T

    def transition_mean(self, k, x_prev, regime=None):
        return np.atleast_2d(x_prev) @ self.F.T

    def log_likelihood(self, k, x, y):
        x = np.atleast_2d(x)
        y = np.asarray(y, dtype=float).reshape(-1)
        r = y - x @ self.H.T
        q = np.einsum("ij,jk,ik->i", r, self._r_inv, r)
        return -0.5 * q + self._lognorm

    def initial_moments(self):
        return self.x0_mean.copy(), self.x0_cov.copy()

    def transition_jacobian(self, k, x):
        return self.F.copy()

    def observation_mean(self, x):
        return np.atleast_2d(x) @ self.H.T

    def observation_jacobian(self, x):
        return self.H.copy()

    def process_cov(self, k):
        return self.chol_q @ self.chol_q.T

    def obs_cov(self, k):
        return self.R.copy()


# ---------------------------------------------------------------------------
# simulation specs and ground-truth simulators
# ---------------------------------------------------------------------------

@dataclass
class Model1Spec:
    """Scalar benchmark: horizon, noise scales, standard initial law."""

    K: int = 50
    process_std: float = 3.0
    obs_std: float = 1.0
    init_mean: float = 0.0
    init_std: float = 1.0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.process_std < 0 or self.obs_std < 0:
            raise ValueError("noise scales must be nonnegative")

    def model(self, process_std: float | None = None) -> GrowthModel:
        return GrowthModel(
            self.process_std if process_std is None else process_std,
            self.obs_std,
            self.init_mean,
            self.init_std,
        )


@dataclass
class Model2Spec:
    """Bearings-only benchmark: process scale, concentration, initial moments, horizon."""

    K: int = 40
    sigma_w: float = 0.001
    rho: float = 1.0 - 0.005**2
    x0_mean: np.ndarray = field(default_factory=lambda: np.array([-0.05, 0.2, 0.001, -0.055]))
    x0_cov: np.ndarray = field(
        default_factory=lambda: 0.01 * np.diag([0.5**2, 0.3**2, 0.005**2, 0.01**2])
    )

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        self.x0_mean = np.asarray(self.x0_mean, dtype=float)
        self.x0_cov = np.asarray(self.x0_cov, dtype=float)

    def model(self, sigma_w: float | None = None, gaussian_obs: bool = False) -> BearingsOnlyModel:
        return BearingsOnlyModel(
            self.sigma_w if sigma_w is None else sigma_w,
            self.rho,
            self.x0_mean,
            self.x0_cov,
            gaussian_obs=gaussian_obs,
        )


@dataclass
class ScenarioSpec:
    """Truth-trajectory scenario for the bearings-only study.

    ``maneuvering-deterministic`` evolves the truth as noise-free constant
    velocity (the filters' process noise is then purely a tuning parameter);
    ``stochastic`` uses the model's own noisy dynamics. A turn rotates the
    velocity sub-vector by ``turn_angle`` at ``turn_time`` (default: mid-run).
    """

    turn: bool = False
    turn_time: int | None = None
    turn_angle: float = math.pi / 3.0
    truth_mode: str = "maneuvering-deterministic"

    def __post_init__(self):
        if self.truth_mode not in ("maneuvering-deterministic", "stochastic"):
            raise ValueError(f"unknown truth_mode {self.truth_mode!r}")

    def resolved_turn_time(self, K: int) -> int:
        t = max(1, K // 2) if self.turn_time is None else int(self.turn_time)
        if not 1 <= t <= K:
            raise ValueError(f"turn_time must lie in [1, K]={K}, got {t}")
        return t


def simulate_model1(spec: Model1Spec, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """Simulate the scalar model; returns states (K+1, 1) and observations (K, 1)."""
    xs = np.empty((spec.K + 1, 1))
    ys = np.empty((spec.K, 1))
    xs[0, 0] = spec.init_mean + spec.init_std * rng.normal()
    for k in range(1, spec.K + 1):
        xs[k, 0] = model1_mean(xs[k - 1, 0], k) + spec.process_std * rng.normal()
        ys[k - 1, 0] = model1_obs_mean(xs[k, 0]) + spec.obs_std * rng.normal()
    return xs, ys


def _rotate_velocity(x: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    out = x.copy()
    out[2] = c * x[2] - s * x[3]
    out[3] = s * x[2] + c * x[3]
    return out


def simulate_model2(
    spec: Model2Spec, scenario: ScenarioSpec, rng: RngStream
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate the bearings-only model; returns states (K+1, 4) and bearings (K, 1).

    A trajectory that hits the origin exactly (probability zero) is dropped
    and re-simulated from the next child stream.
    """
    turn_time = scenario.resolved_turn_time(spec.K) if scenario.turn else 0
    chol0 = cholesky_psd(spec.x0_cov)
    for attempt in range(100):
        stream = rng if attempt == 0 else rng.child(attempt)
        try:
            return _simulate_model2_once(spec, scenario, turn_time, chol0, stream)
        except ValueError:
            log.warning("trajectory hit the origin; resimulating from child stream %d", attempt + 1)
    raise RuntimeError("could not simulate a trajectory avoiding the origin")


def _simulate_model2_once(spec, scenario, turn_time, chol0, rng):
    xs = np.empty((spec.K + 1, 4))
    ys = np.empty((spec.K, 1))
    xs[0] = spec.x0_mean + chol0 @ rng.normal(4)
    for k in range(1, spec.K + 1):
        prev = xs[k - 1]
        if scenario.turn and k == turn_time:
            prev = _rotate_velocity(prev, scenario.turn_angle)
        xs[k] = MODEL2_F @ prev
        if scenario.truth_mode == "stochastic":
            xs[k] += spec.sigma_w * (MODEL2_G @ rng.normal(2))
        mu = bearing(xs[k])  # raises at the origin
        ys[k - 1, 0] = wrapped_cauchy_sample(WrappedCauchyParams(mu, spec.rho), rng)
    return xs, ys


def trajectory_to_csv(xs: np.ndarray, ys: np.ndarray) -> str:
    """Dump a trajectory as ``k,x0..x{n-1},y0..y{d-1}``; the k=0 row has empty y fields."""
    xs = np.atleast_2d(xs)
    ys = np.atleast_2d(ys)
    n, d = xs.shape[1], ys.shape[1]
    lines = [",".join(["k"] + [f"x{j}" for j in range(n)] + [f"y{j}" for j in range(d)])]
    for k in range(xs.shape[0]):
        row = [str(k)] + [repr(float(v)) for v in xs[k]]
        row += [""] * d if k == 0 else [repr(float(v)) for v in ys[k - 1]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
