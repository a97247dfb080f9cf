"""Kalman filter (the conjugate oracle), extended KF, and unscented KF baselines."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .ssm import StateSpaceModel
from .stochastics import cholesky_psd

__all__ = [
    "GaussianBelief",
    "UTParams",
    "GaussianFilterOutput",
    "kalman_step",
    "ekf_step",
    "sigma_points",
    "ukf_step",
    "run_kalman_filter",
    "run_gaussian_filter",
]


def _symmetrize_psd(cov: np.ndarray) -> np.ndarray:
    """Symmetrize and clamp tiny negative eigenvalues to zero."""
    cov = 0.5 * (cov + cov.T)
    w = np.linalg.eigvalsh(cov)
    if w.min() < 0.0:
        vals, vecs = np.linalg.eigh(cov)
        cov = (vecs * np.maximum(vals, 0.0)) @ vecs.T
        cov = 0.5 * (cov + cov.T)
    return cov


@dataclass
class GaussianBelief:
    """(mean, covariance) summary of the state at time index k."""

    mean: np.ndarray
    cov: np.ndarray
    k: int = 0

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if np.max(np.abs(cov - cov.T)) > 1e-10:
            raise ValueError("covariance is not symmetric within 1e-10")
        self.cov = _symmetrize_psd(cov)


@dataclass(frozen=True)
class UTParams:
    """Unscented-transform scaling constants; ``kappa=None`` resolves to 3 - n."""

    alpha: float = 1.0
    beta: float = 2.0
    kappa: float | None = None

    def resolve(self, n: int) -> tuple[float, float, float]:
        kappa = 3.0 - n if self.kappa is None else float(self.kappa)
        lam = self.alpha**2 * (n + kappa) - n
        if n + lam <= 0.0:
            raise ValueError(f"n + lambda must be positive, got {n + lam}")
        return self.alpha, self.beta, lam


@dataclass
class GaussianFilterOutput:
    means: np.ndarray  # (K, n)
    covs: np.ndarray  # (K, n, n)
    wall_seconds: float


def _innovation(model, y, y_pred):
    fn = getattr(model, "innovation", None)
    if fn is not None:
        return np.asarray(fn(y, y_pred), dtype=float).reshape(-1)
    return np.asarray(y, dtype=float).reshape(-1) - np.asarray(y_pred, dtype=float).reshape(-1)


def kalman_step(F, q_eff, H, R, belief: GaussianBelief, y) -> GaussianBelief:
    """Exact conjugate predict/update for X' = F X + w, Y = H X' + v."""
    F = np.atleast_2d(np.asarray(F, float))
    q_eff = np.atleast_2d(np.asarray(q_eff, float))
    H = np.atleast_2d(np.asarray(H, float))
    R = np.atleast_2d(np.asarray(R, float))
    y = np.atleast_1d(np.asarray(y, float))
    m_pred = F @ belief.mean
    p_pred = F @ belief.cov @ F.T + q_eff
    s = H @ p_pred @ H.T + R
    cond = np.linalg.cond(s)
    if not np.isfinite(cond) or cond > 1e14:
        raise np.linalg.LinAlgError("innovation covariance is singular")
    gain = p_pred @ H.T @ np.linalg.inv(s)
    mean = m_pred + gain @ (y - H @ m_pred)
    cov = (np.eye(F.shape[0]) - gain @ H) @ p_pred
    return GaussianBelief(mean, _symmetrize_psd(cov), belief.k + 1)


def ekf_step(model: StateSpaceModel, belief: GaussianBelief, y, k: int) -> GaussianBelief:
    """Linearize the dynamics at the mean and the observation at the predicted
    mean, then apply the conjugate update."""
    F = model.transition_jacobian(k, belief.mean)
    m_pred = np.asarray(model.transition_mean(k, belief.mean)).reshape(-1)
    p_pred = F @ belief.cov @ F.T + model.process_cov(k)
    H = model.observation_jacobian(m_pred)
    y_pred = np.asarray(model.observation_mean(m_pred)).reshape(-1)
    s = H @ p_pred @ H.T + model.obs_cov(k)
    gain = p_pred @ H.T @ np.linalg.inv(s)
    mean = m_pred + gain @ _innovation(model, y, y_pred)
    cov = (np.eye(mean.shape[0]) - gain @ H) @ p_pred
    return GaussianBelief(mean, _symmetrize_psd(cov), k)


def sigma_points(belief: GaussianBelief, params: UTParams):
    """2n+1 unscented points with their mean and covariance weights."""
    n = belief.mean.shape[0]
    alpha, beta, lam = params.resolve(n)
    try:
        root = cholesky_psd((n + lam) * belief.cov)
    except ValueError as exc:
        raise ValueError("sigma-point square root failed: covariance not PSD") from exc
    pts = np.empty((2 * n + 1, n))
    pts[0] = belief.mean
    for i in range(n):
        pts[1 + i] = belief.mean + root[:, i]
        pts[1 + n + i] = belief.mean - root[:, i]
    wm = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
    wc = wm.copy()
    wm[0] = lam / (n + lam)
    wc[0] = wm[0] + 1.0 - alpha**2 + beta
    return pts, wm, wc


def ukf_step(
    model: StateSpaceModel, belief: GaussianBelief, y, k: int,
    params: UTParams = UTParams(),
) -> GaussianBelief:
    """Unscented predict through the transition mean plus additive process
    noise, then unscented update through the observation mean."""
    n = belief.mean.shape[0]
    pts, wm, wc = sigma_points(belief, params)
    fpts = np.atleast_2d(model.transition_mean(k, pts))
    m_pred = wm @ fpts
    d = fpts - m_pred
    p_pred = _symmetrize_psd((d.T * wc) @ d + model.process_cov(k))

    pts2, wm2, wc2 = sigma_points(GaussianBelief(m_pred, p_pred, k), params)
    ypts = np.atleast_2d(model.observation_mean(pts2))
    if ypts.shape[0] != pts2.shape[0]:
        ypts = ypts.reshape(pts2.shape[0], -1)
    y_pred = wm2 @ ypts
    dy = np.stack([_innovation(model, row, y_pred) for row in ypts])
    dx = pts2 - m_pred
    s = (dy.T * wc2) @ dy + model.obs_cov(k)
    p_xy = (dx.T * wc2) @ dy
    gain = p_xy @ np.linalg.inv(s)
    mean = m_pred + gain @ _innovation(model, y, y_pred)
    cov = p_pred - gain @ s @ gain.T
    return GaussianBelief(mean, _symmetrize_psd(cov), k)


def run_kalman_filter(model: StateSpaceModel, ys: np.ndarray) -> GaussianFilterOutput:
    """Exact Kalman run for a linear-Gaussian model (constant F, H)."""
    ys = np.atleast_2d(np.asarray(ys, float))
    m0, p0 = model.initial_moments()
    F = model.transition_jacobian(1, m0)
    H = model.observation_jacobian(m0)
    t0 = time.perf_counter()
    belief = GaussianBelief(m0, p0, 0)
    means, covs = [], []
    for k in range(1, ys.shape[0] + 1):
        belief = kalman_step(F, model.process_cov(k), H, model.obs_cov(k), belief, ys[k - 1])
        means.append(belief.mean)
        covs.append(belief.cov)
    return GaussianFilterOutput(np.array(means), np.array(covs), time.perf_counter() - t0)


def run_gaussian_filter(
    model: StateSpaceModel, ys: np.ndarray, kind: str,
    ut_params: UTParams = UTParams(),
) -> GaussianFilterOutput:
    """Run EKF or UKF from the model's true initial moments."""
    if kind not in ("EKF", "UKF"):
        raise ValueError(f"unknown Gaussian filter kind {kind!r}")
    ys = np.atleast_2d(np.asarray(ys, float))
    m0, p0 = model.initial_moments()
    t0 = time.perf_counter()
    belief = GaussianBelief(m0, p0, 0)
    means, covs = [], []
    for k in range(1, ys.shape[0] + 1):
        if kind == "EKF":
            belief = ekf_step(model, belief, ys[k - 1], k)
        else:
            belief = ukf_step(model, belief, ys[k - 1], k, ut_params)
        means.append(belief.mean)
        covs.append(belief.cov)
    return GaussianFilterOutput(np.array(means), np.array(covs), time.perf_counter() - t0)
