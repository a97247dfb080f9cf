"""Core particle filters: bootstrap, auxiliary, and the predictive smoothing variant.

Each filter exists as a single-step function operating on a
:class:`~smc_kit.ssm.ParticleCloud` (the reference semantics, used by tests
and the ``python`` backend) and as a compiled full-run loop (the ``compiled``
backend behind :func:`run_filter`, used for benchmarks).

Randomness is organized by purpose: a step (or run) stream derives fixed
child streams for initialization, propagation noise, resampling, regime
draws, the pilot stage, offspring draws, the second propagation, and slot
allocation. Because each purpose owns its own stream, adding a stage that
the base algorithm lacks (regime draws, a deterministic offspring) does not
shift the draws of the other stages — the reduction identities between
filter variants then hold exactly, particle for particle.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .ssm import (
    DegeneracyError,
    ParticleCloud,
    RegimeSet,
    StateSpaceModel,
    effective_sample_size,
    multinomial_indices,
    normalize_log_weights,
    posterior_mean,
    resample,
)
from .stochastics import RngStream

__all__ = [
    "FilterKind",
    "FilterOutput",
    "StepInfo",
    "bpf_step",
    "apf_step",
    "pbps_step",
    "run_filter",
]

# stream purpose indices (children of a step stream or of a run stream)
INIT, PROP, RESAMPLE, REGIME, PILOT, OFFSPRING, PROP2, ALLOC, STEP = range(9)


class FilterKind(enum.Enum):
    BPF = "BPF"
    APF = "APF"
    PBPS = "PBPS"


@dataclass
class StepInfo:
    """Post-correction, pre-resampling view of one filter step."""

    estimate: np.ndarray  # weighted posterior mean
    ess: float
    weighted: ParticleCloud  # particles with their normalized correction weights


@dataclass
class FilterOutput:
    """Estimates and diagnostics of one filter run.

    On failure (all weights vanished at ``fail_k``) the estimate rows stop at
    ``fail_k - 1``.
    """

    estimates: np.ndarray  # (steps_done, state_dim)
    ess: np.ndarray  # (steps_done,)
    wall_seconds: float
    failed: bool = False
    fail_k: int | None = None
    clouds: list[ParticleCloud] | None = None
    regime_fractions: np.ndarray | None = None  # (steps_done, L) for regime-switching runs


def _carry_log_weights(cloud: ParticleCloud) -> np.ndarray:
    # uniform clouds carry an exactly-zero log weight so that downstream
    # arithmetic is bit-identical to a filter that never saw the carry
    if np.all(cloud.weights == cloud.weights[0]):
        return np.zeros(cloud.n_particles)
    return np.log(cloud.weights)


def _finish_step(
    k: int,
    particles: np.ndarray,
    log_w: np.ndarray,
    regimes: np.ndarray | None,
    rng: RngStream,
    scheme: str,
    ess_threshold: float | None,
) -> tuple[ParticleCloud, StepInfo]:
    weights = normalize_log_weights(log_w, k)
    weighted = ParticleCloud(k, particles, weights, regimes)
    info = StepInfo(posterior_mean(weighted), effective_sample_size(weighted), weighted)
    if ess_threshold is not None and info.ess >= ess_threshold * weighted.n_particles:
        return weighted, info
    return resample(weighted, rng.child(RESAMPLE), scheme), info


def bpf_step(
    model: StateSpaceModel,
    cloud: ParticleCloud,
    y_k: np.ndarray,
    rng: RngStream,
    *,
    scheme: str = "multinomial",
    ess_threshold: float | None = None,
    regimes: np.ndarray | None = None,
) -> tuple[ParticleCloud, StepInfo]:
    """One bootstrap step: propagate, weight by the local likelihood, resample."""
    k = cloud.k + 1
    xp = model.sample_transition(k, cloud.particles, rng.child(PROP), regime=regimes)
    log_w = _carry_log_weights(cloud) + model.log_likelihood(k, xp, y_k)
    return _finish_step(k, xp, log_w, regimes, rng, scheme, ess_threshold)


def apf_step(
    model: StateSpaceModel,
    cloud: ParticleCloud,
    y_k: np.ndarray,
    rng: RngStream,
    *,
    scheme: str = "multinomial",
    ess_threshold: float | None = None,
    regimes: np.ndarray | None = None,
) -> tuple[ParticleCloud, StepInfo]:
    """One auxiliary step: pilot-select ancestors by the likelihood of their
    mean evolution, propagate, correct by the likelihood ratio."""
    k = cloud.k + 1
    pilots = model.transition_mean(k, cloud.particles, regime=regimes)
    pilot_ll = model.log_likelihood(k, pilots, y_k)
    try:
        pilot_w = normalize_log_weights(_carry_log_weights(cloud) + pilot_ll, k)
    except DegeneracyError as exc:
        exc.where = "pilot weights"
        raise
    anc = multinomial_indices(pilot_w, cloud.n_particles, rng.child(PILOT))
    anc_regimes = regimes[anc] if regimes is not None else None
    xp = model.sample_transition(k, cloud.particles[anc], rng.child(PROP), regime=anc_regimes)
    log_w = model.log_likelihood(k, xp, y_k) - pilot_ll[anc]
    return _finish_step(k, xp, log_w, anc_regimes, rng, scheme, ess_threshold)


def pbps_step(
    model: StateSpaceModel,
    cloud: ParticleCloud,
    y_k: np.ndarray,
    y_next: np.ndarray | None,
    rng: RngStream,
    *,
    offspring_mode: str = "deterministic",
    scheme: str = "multinomial",
    ess_threshold: float | None = None,
    regimes: np.ndarray | None = None,
) -> tuple[ParticleCloud, StepInfo]:
    """One predictive-smoothing step: weights combine the current likelihood
    with the likelihood of a one-step-ahead offspring against the next
    observation. Without ``y_next`` (the final step) this is exactly a
    bootstrap step; the deterministic offspring consumes no randomness.
    """
    if offspring_mode not in ("deterministic", "stochastic"):
        raise ValueError(f"unknown offspring mode {offspring_mode!r}")
    k = cloud.k + 1
    xp = model.sample_transition(k, cloud.particles, rng.child(PROP), regime=regimes)
    log_w = _carry_log_weights(cloud) + model.log_likelihood(k, xp, y_k)
    if y_next is not None:
        if offspring_mode == "deterministic":
            offspring = model.transition_mean(k + 1, xp, regime=regimes)
        else:
            offspring = model.sample_transition(k + 1, xp, rng.child(OFFSPRING), regime=regimes)
        log_w = log_w + model.log_likelihood(k + 1, offspring, y_next)
    return _finish_step(k, xp, log_w, regimes, rng, scheme, ess_threshold)


# ---------------------------------------------------------------------------
# full runs
# ---------------------------------------------------------------------------

def _draw_regimes(rng: RngStream, K: int, N: int, regime_set: RegimeSet) -> np.ndarray:
    u = rng.uniform((K, N))
    idx = np.minimum((u * len(regime_set)).astype(np.int64), len(regime_set) - 1)
    return regime_set.values[idx]


def _regime_fractions(regimes: np.ndarray, regime_set: RegimeSet) -> np.ndarray:
    return np.stack([(regimes == v).mean(axis=1) for v in regime_set.values], axis=1)


def run_filter(
    model: StateSpaceModel,
    ys: np.ndarray,
    n_particles: int,
    kind: FilterKind,
    rng: RngStream,
    *,
    offspring_mode: str = "deterministic",
    scheme: str = "multinomial",
    ess_threshold: float | None = None,
    regime_set: RegimeSet | None = None,
    store_clouds: bool = False,
    backend: str = "compiled",
) -> FilterOutput:
    """Run a particle filter over a whole observation record.

    Passing ``regime_set`` turns the run into its regime-switching variant:
    each particle redraws its transition parameter uniformly from the set at
    every step. Estimates are the weighted posterior means recorded after
    each correction (before resampling). The same seed always reproduces the
    same output bit for bit (within a backend).
    """
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if ys.shape[0] < 1:
        raise ValueError("need at least one observation")
    if n_particles < 1:
        raise ValueError("need at least one particle")
    kind = FilterKind(kind)
    if backend == "compiled":
        return _run_compiled(
            model, ys, n_particles, kind, rng,
            offspring_mode=offspring_mode, scheme=scheme, ess_threshold=ess_threshold,
            regime_set=regime_set, store_clouds=store_clouds,
        )
    if backend == "python":
        return _run_python(
            model, ys, n_particles, kind, rng,
            offspring_mode=offspring_mode, scheme=scheme, ess_threshold=ess_threshold,
            regime_set=regime_set, store_clouds=store_clouds,
        )
    raise ValueError(f"unknown backend {backend!r}")


def _run_compiled(model, ys, N, kind, rng, *, offspring_mode, scheme, ess_threshold,
                  regime_set, store_clouds):
    if model.kernel_propagate is None:
        raise TypeError(f"{type(model).__name__} provides no compiled kernels; use backend='python'")
    K = ys.shape[0]
    n, m = model.state_dim, model.noise_dim
    scheme_code = {"multinomial": _kernels.MULTINOMIAL, "systematic": _kernels.SYSTEMATIC}[scheme]
    thr = _kernels.ALWAYS_RESAMPLE if ess_threshold is None else float(ess_threshold)

    t0 = time.perf_counter()
    x0 = model.sample_initial(rng.child(INIT), N)
    if regime_set is not None:
        regimes = _draw_regimes(rng.child(REGIME), K, N, regime_set)
    else:
        regimes = np.full((K, N), float(model.nominal_regime))
    prop_noise = rng.child(PROP).normal((K, N, m))
    if scheme == "multinomial":
        res_draws = rng.child(RESAMPLE).exponential((K, N + 1))
    else:
        res_draws = rng.child(RESAMPLE).uniform((K, 1))
    estimates = np.empty((K, n))
    ess = np.empty(K)
    if store_clouds:
        particles_out = np.empty((K, N, n))
        weights_out = np.empty((K, N))
    else:
        particles_out = np.empty((1, 1, 1))
        weights_out = np.empty((1, 1))

    if kind is FilterKind.BPF:
        fail = _kernels.bpf_kernel(
            model.kernel_propagate, model.kernel_loglik, model.kernel_params,
            x0, ys, regimes, prop_noise, res_draws, scheme_code, thr,
            estimates, ess, store_clouds, particles_out, weights_out,
        )
    elif kind is FilterKind.APF:
        pilot_draws = rng.child(PILOT).exponential((K, N + 1))
        fail = _kernels.apf_kernel(
            model.kernel_propagate, model.kernel_mean, model.kernel_loglik, model.kernel_params,
            x0, ys, regimes, prop_noise, pilot_draws, res_draws, scheme_code, thr,
            estimates, ess, store_clouds, particles_out, weights_out,
        )
    else:
        if offspring_mode not in ("deterministic", "stochastic"):
            raise ValueError(f"unknown offspring mode {offspring_mode!r}")
        stochastic = offspring_mode == "stochastic"
        off_noise = rng.child(OFFSPRING).normal((K, N, m)) if stochastic else np.zeros((1, 1, m))
        fail = _kernels.pbps_kernel(
            model.kernel_propagate, model.kernel_mean, model.kernel_loglik, model.kernel_params,
            x0, ys, regimes, prop_noise, res_draws, stochastic, off_noise, scheme_code, thr,
            estimates, ess, store_clouds, particles_out, weights_out,
        )
    wall = time.perf_counter() - t0

    steps = K if fail < 0 else fail - 1
    clouds = None
    if store_clouds:
        clouds = [
            ParticleCloud(
                kk + 1,
                particles_out[kk],
                weights_out[kk],
                regimes[kk] if regime_set is not None else None,
            )
            for kk in range(steps)
        ]
    return FilterOutput(
        estimates=estimates[:steps],
        ess=ess[:steps],
        wall_seconds=wall,
        failed=fail >= 0,
        fail_k=None if fail < 0 else int(fail),
        clouds=clouds,
        regime_fractions=(
            _regime_fractions(regimes[:steps], regime_set) if regime_set is not None else None
        ),
    )


def _run_python(model, ys, N, kind, rng, *, offspring_mode, scheme, ess_threshold,
                regime_set, store_clouds):
    K = ys.shape[0]
    t0 = time.perf_counter()
    cloud = ParticleCloud.uniform(0, model.sample_initial(rng.child(INIT), N))
    estimates, ess_values, clouds = [], [], [] if store_clouds else None
    regimes_used = []
    failed, fail_k = False, None
    for kk in range(K):
        step_rng = rng.child(STEP, kk + 1)
        regimes = None
        if regime_set is not None:
            regimes = _draw_regimes(step_rng.child(REGIME), 1, N, regime_set)[0]
            regimes_used.append(regimes)
        try:
            if kind is FilterKind.BPF:
                cloud, info = bpf_step(
                    model, cloud, ys[kk], step_rng,
                    scheme=scheme, ess_threshold=ess_threshold, regimes=regimes,
                )
            elif kind is FilterKind.APF:
                cloud, info = apf_step(
                    model, cloud, ys[kk], step_rng,
                    scheme=scheme, ess_threshold=ess_threshold, regimes=regimes,
                )
            else:
                y_next = ys[kk + 1] if kk + 1 < K else None
                cloud, info = pbps_step(
                    model, cloud, ys[kk], y_next, step_rng,
                    offspring_mode=offspring_mode, scheme=scheme,
                    ess_threshold=ess_threshold, regimes=regimes,
                )
        except DegeneracyError:
            failed, fail_k = True, kk + 1
            break
        estimates.append(info.estimate)
        ess_values.append(info.ess)
        if store_clouds:
            clouds.append(info.weighted)
    wall = time.perf_counter() - t0
    fractions = None
    if regime_set is not None and regimes_used:
        steps = len(estimates)
        fractions = _regime_fractions(np.stack(regimes_used[:steps]), regime_set)
    return FilterOutput(
        estimates=np.array(estimates).reshape(len(estimates), model.state_dim),
        ess=np.asarray(ess_values),
        wall_seconds=wall,
        failed=failed,
        fail_k=fail_k,
        clouds=clouds,
        regime_fractions=fractions,
    )
