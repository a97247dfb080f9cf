"""Deterministic random streams and the distributions used by the models and filters.

Every sampler in the package draws from an :class:`RngStream`, a splittable
generator: a stream is identified by a 64-bit root seed plus a path of child
indices, so any cell of a benchmark sweep can rebuild its own independent
stream from ``(seed, path)`` without coordination. Same seed and path ⇒ same
sample sequence, across runs and platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RngStream",
    "WrappedCauchyParams",
    "gaussian_sample",
    "gaussian_logpdf",
    "wrapped_cauchy_logpdf",
    "wrapped_cauchy_sample",
    "multinomial_counts",
    "uniform_choice",
    "wrap_angle",
    "cholesky_psd",
]

_TWO_PI = 2.0 * math.pi


class RngStream:
    """A single-owner deterministic random stream (PCG64 behind SeedSequence).

    Child streams derived with distinct index paths are statistically
    independent. Instances must not be shared across threads; distinct
    streams may be used from distinct threads freely.
    """

    __slots__ = ("seed", "path", "gen")

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        self.gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self.path))
        )

    def child(self, *indices: int) -> "RngStream":
        """Derive an independent stream at ``path + indices`` (parent unaffected)."""
        return RngStream(self.seed, self.path + tuple(indices))

    def normal(self, size=None) -> np.ndarray:
        return self.gen.standard_normal(size)

    def uniform(self, size=None) -> np.ndarray:
        return self.gen.random(size)

    def exponential(self, size=None) -> np.ndarray:
        return self.gen.standard_exponential(size)

    def integers(self, n: int, size=None) -> np.ndarray:
        return self.gen.integers(0, n, size=size)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path})"


def wrap_angle(y):
    """Wrap an angle (or array of angles) into [-pi, pi)."""
    return np.mod(np.asarray(y, dtype=float) + math.pi, _TWO_PI) - math.pi


@dataclass(frozen=True)
class WrappedCauchyParams:
    """Circular location/concentration pair: ``mu`` in [-pi, pi), ``rho`` in [0, 1)."""

    mu: float
    rho: float

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        object.__setattr__(self, "mu", float(wrap_angle(self.mu)))


def cholesky_psd(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric PSD matrix.

    The zero matrix factors to zero (point mass). Semi-definite matrices get
    one retry with ``1e-12 * trace/n`` added to the diagonal.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"covariance must be a square matrix, got shape {cov.shape}")
    if not np.any(cov):
        return np.zeros_like(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        n = cov.shape[0]
        jitter = 1e-12 * np.trace(cov) / n
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(n))
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance is not positive semidefinite") from exc


def gaussian_sample(
    mean: np.ndarray, cov: np.ndarray, rng: RngStream, size: int | None = None
) -> np.ndarray:
    """Draw from N(mean, cov); returns shape ``(n,)`` or ``(size, n)``."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    n = mean.shape[0]
    if cov.shape != (n, n):
        raise ValueError(f"dimension mismatch: mean {mean.shape}, cov {cov.shape}")
    chol = cholesky_psd(cov)
    if size is None:
        return mean + chol @ rng.normal(n)
    return mean + rng.normal((size, n)) @ chol.T


def gaussian_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """Exact log-density of N(mean, cov) at x, including the normalization constant."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    n = mean.shape[0]
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is singular or not positive definite") from exc
    r = np.linalg.solve(chol, x - mean)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return float(-0.5 * (n * math.log(_TWO_PI) + log_det + r @ r))


def wrapped_cauchy_logpdf(y, params: WrappedCauchyParams):
    """Log-density (2pi)^-1 (1-rho^2) / (1 + rho^2 - 2 rho cos(y - mu)) on the circle.

    The denominator is evaluated as (1-rho)^2 + 4 rho sin^2((y-mu)/2), which
    is cancellation-free near the mode even for rho close to 1.
    """
    if params.rho >= 1.0:
        raise ValueError(f"rho must be < 1, got {params.rho}")
    y = wrap_angle(y)
    rho = params.rho
    num = math.log1p(-rho) + math.log1p(rho) - math.log(_TWO_PI)
    half = 0.5 * (y - params.mu)
    den = np.log((1.0 - rho) ** 2 + 4.0 * rho * np.sin(half) ** 2)
    out = num - den
    return float(out) if np.ndim(out) == 0 else out


def wrapped_cauchy_sample(
    params: WrappedCauchyParams, rng: RngStream, size: int | None = None
):
    """Exact wrapped Cauchy draw(s) in [-pi, pi).

    Half-angle tangent construction: with U uniform on (0,1),
    mu + 2 atan(((1-rho)/(1+rho)) tan(pi (U - 1/2))) has the target law;
    rejection-free.
    """
    u = rng.uniform(size)
    scale = (1.0 - params.rho) / (1.0 + params.rho)
    y = params.mu + 2.0 * np.arctan(scale * np.tan(math.pi * (u - 0.5)))
    out = wrap_angle(y)
    return float(out) if size is None else out


def multinomial_counts(weights: np.ndarray, n: int, rng: RngStream) -> np.ndarray:
    """Multinomial occupancy counts of ``n`` draws over ``len(weights)`` cells.

    Counts sum to n; cell i has expectation n * weights[i].
    """
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    total = weights.sum()
    if total <= 0.0:
        raise ValueError("all weights are zero (degenerate distribution)")
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1 within 1e-9, got {total}")
    cum = np.cumsum(weights)
    cum[-1] = max(cum[-1], 1.0)
    idx = np.searchsorted(cum, rng.uniform(n), side="left")
    return np.bincount(idx, minlength=weights.shape[0]).astype(np.int64)


def uniform_choice(items, rng: RngStream):
    """Pick one element of a nonempty finite sequence uniformly at random."""
    items = list(items)
    if not items:
        raise ValueError("cannot choose from an empty set")
    return items[int(rng.integers(len(items)))]
