"""Model-mismatch-robust filters: regime switching and dynamic model averaging.

Regime switching redraws each particle's transition parameter uniformly from
a finite candidate set at every step; it wraps any of the base filters.
Dynamic model averaging (DMA) instead allocates the particle budget across
candidate models proportionally to their aggregated one-step likelihood,
resamples ancestors within each model group, and re-propagates under fresh
labels; its output cloud is uniformly weighted (no final correction), as the
construction prescribes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .filters import (
    ALLOC,
    INIT,
    PROP,
    PROP2,
    REGIME,
    RESAMPLE,
    STEP,
    FilterKind,
    FilterOutput,
    StepInfo,
    _draw_regimes,
    apf_step,
    bpf_step,
    pbps_step,
    run_filter,
)
from .ssm import DegeneracyError, ParticleCloud, RegimeSet, StateSpaceModel, normalize_log_weights
from .stochastics import RngStream, multinomial_counts

__all__ = [
    "RegimeFamily",
    "rs_step",
    "dma_bpf_step",
    "run_rs_filter",
    "run_dma_filter",
]


@dataclass
class RegimeFamily:
    """A state-space model together with the finite set of transition regimes
    its ``sample_transition`` accepts; the observation model is regime-free."""

    model: StateSpaceModel
    regimes: RegimeSet


def rs_step(
    family: RegimeFamily,
    cloud: ParticleCloud,
    y_k: np.ndarray,
    rng: RngStream,
    *,
    y_next: np.ndarray | None = None,
    base: FilterKind = FilterKind.BPF,
    offspring_mode: str = "deterministic",
    scheme: str = "multinomial",
    ess_threshold: float | None = None,
) -> tuple[ParticleCloud, StepInfo]:
    """One regime-switching step: draw a regime per particle uniformly from
    the set, then run the base step under those regimes."""
    regimes = _draw_regimes(rng.child(REGIME), 1, cloud.n_particles, family.regimes)[0]
    base = FilterKind(base)
    if base is FilterKind.BPF:
        return bpf_step(family.model, cloud, y_k, rng,
                        scheme=scheme, ess_threshold=ess_threshold, regimes=regimes)
    if base is FilterKind.APF:
        return apf_step(family.model, cloud, y_k, rng,
                        scheme=scheme, ess_threshold=ess_threshold, regimes=regimes)
    return pbps_step(family.model, cloud, y_k, y_next, rng,
                     offspring_mode=offspring_mode, scheme=scheme,
                     ess_threshold=ess_threshold, regimes=regimes)


def run_rs_filter(
    family: RegimeFamily,
    ys: np.ndarray,
    n_particles: int,
    base: FilterKind,
    rng: RngStream,
    **options,
) -> FilterOutput:
    """Full regime-switching run (RS-BPF / RS-APF / RS-PBPS)."""
    return run_filter(family.model, ys, n_particles, base, rng,
                      regime_set=family.regimes, **options)


def _reallocate_counts(counts: np.ndarray, weights: np.ndarray, group_sizes: np.ndarray) -> np.ndarray:
    """Move slots allocated to memberless groups onto the best populated group.

    Unreachable through the filter itself (an empty group has exactly zero
    aggregate likelihood), kept as a guard on the allocation contract.
    """
    counts = counts.copy()
    populated = group_sizes > 0
    if not populated.any():
        raise DegeneracyError(-1, "model groups")
    for l in np.nonzero((counts > 0) & ~populated)[0]:
        target = int(np.argmax(np.where(populated, weights, -1.0)))
        counts[target] += counts[l]
        counts[l] = 0
    return counts


def _labels_to_indices(labels: np.ndarray, regimes: RegimeSet) -> np.ndarray:
    match = labels[:, None] == regimes.values[None, :]
    if not match.any(axis=1).all():
        bad = labels[~match.any(axis=1)][0]
        raise ValueError(f"regime label {bad!r} is not in the regime set {list(regimes.values)}")
    return match.argmax(axis=1)


def init_labels(regimes: RegimeSet, n: int, rng: RngStream) -> np.ndarray:
    """Initial per-particle regime labels, uniform over the set."""
    idx = np.minimum((rng.uniform(n) * len(regimes)).astype(np.int64), len(regimes) - 1)
    return regimes.values[idx]


def dma_bpf_step(
    family: RegimeFamily,
    cloud: ParticleCloud,
    y_k: np.ndarray,
    rng: RngStream,
) -> tuple[ParticleCloud, StepInfo]:
    """One dynamic-model-averaging bootstrap step.

    Candidate-propagate each particle under its current label, aggregate the
    candidate likelihoods per model, allocate the N slots by a multinomial
    draw over the model weights, resample ancestors within each model group
    (weighted by their candidate likelihoods), relabel, and propagate afresh.
    The returned cloud is uniformly weighted and labeled.
    """
    if cloud.regimes is None:
        raise ValueError("DMA needs a cloud with regime labels (see init_labels)")
    model, regimes = family.model, family.regimes
    k = cloud.k + 1
    n = cloud.n_particles
    L = len(regimes)
    label_idx = _labels_to_indices(cloud.regimes, regimes)

    cand = model.sample_transition(k, cloud.particles, rng.child(PROP), regime=cloud.regimes)
    cand_ll = model.log_likelihood(k, cand, y_k)

    group_lw = np.full(L, -np.inf)
    for l in range(L):
        members = cand_ll[label_idx == l]
        if members.size:
            m = members.max()
            if m > -np.inf:
                group_lw[l] = m + np.log(np.sum(np.exp(members - m)))
    try:
        group_w = normalize_log_weights(group_lw, k)
    except DegeneracyError as exc:
        exc.where = "model weights"
        raise
    counts = multinomial_counts(group_w, n, rng.child(ALLOC))
    group_sizes = np.bincount(label_idx, minlength=L)
    counts = _reallocate_counts(counts, group_w, group_sizes)

    slot_u = rng.child(RESAMPLE).uniform(n)
    ancestors = np.empty(n, dtype=np.int64)
    new_labels = np.empty(n)
    slot = 0
    for l in range(L):
        if counts[l] == 0:
            continue
        members = np.nonzero(label_idx == l)[0]
        in_group = normalize_log_weights(cand_ll[members], k)
        cum = np.cumsum(in_group)
        cum[-1] = max(cum[-1], 1.0)
        pick = np.searchsorted(cum, slot_u[slot : slot + counts[l]], side="left")
        ancestors[slot : slot + counts[l]] = members[pick]
        new_labels[slot : slot + counts[l]] = regimes.values[l]
        slot += counts[l]

    out = model.sample_transition(k, cloud.particles[ancestors], rng.child(PROP2), regime=new_labels)
    out_cloud = ParticleCloud.uniform(k, out, new_labels)
    info = StepInfo(
        estimate=out.mean(axis=0),
        ess=float(1.0 / np.sum(normalize_log_weights(cand_ll, k) ** 2)),
        weighted=out_cloud,
    )
    return out_cloud, info


def run_dma_filter(
    family: RegimeFamily,
    ys: np.ndarray,
    n_particles: int,
    rng: RngStream,
    *,
    store_clouds: bool = False,
    backend: str = "compiled",
) -> FilterOutput:
    """Full dynamic-model-averaging bootstrap run."""
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    model, regimes = family.model, family.regimes
    K = ys.shape[0]
    N = int(n_particles)
    if N < 1:
        raise ValueError("need at least one particle")
    L = len(regimes)
    if backend == "python":
        return _run_dma_python(family, ys, N, rng, store_clouds)
    if backend != "compiled":
        raise ValueError(f"unknown backend {backend!r}")
    if model.kernel_propagate is None:
        raise TypeError(f"{type(model).__name__} provides no compiled kernels; use backend='python'")

    n, m = model.state_dim, model.noise_dim
    t0 = time.perf_counter()
    x0 = model.sample_initial(rng.child(INIT), N)
    labels0 = np.minimum((rng.child(REGIME).uniform(N) * L).astype(np.int64), L - 1)
    prop_noise = rng.child(PROP).normal((K, N, m))
    prop2_noise = rng.child(PROP2).normal((K, N, m))
    alloc_u = rng.child(ALLOC).uniform((K, N))
    group_u = rng.child(RESAMPLE).uniform((K, N))
    estimates = np.empty((K, n))
    ess = np.empty(K)
    fractions = np.empty((K, L))
    if store_clouds:
        particles_out = np.empty((K, N, n))
        weights_out = np.empty((K, N))
        labels_out = np.empty((K, N), dtype=np.int64)
    else:
        particles_out = np.empty((1, 1, 1))
        weights_out = np.empty((1, 1))
        labels_out = np.empty((1, 1), dtype=np.int64)
    fail = _kernels.dma_kernel(
        model.kernel_propagate, model.kernel_loglik, model.kernel_params,
        x0, ys, regimes.values, labels0, prop_noise, prop2_noise, alloc_u, group_u,
        estimates, ess, fractions, store_clouds, particles_out, weights_out, labels_out,
    )
    wall = time.perf_counter() - t0
    steps = K if fail < 0 else fail - 1
    clouds = None
    if store_clouds:
        clouds = [
            ParticleCloud.uniform(kk + 1, particles_out[kk], regimes.values[labels_out[kk]])
            for kk in range(steps)
        ]
    return FilterOutput(
        estimates=estimates[:steps],
        ess=ess[:steps],
        wall_seconds=wall,
        failed=fail >= 0,
        fail_k=None if fail < 0 else int(fail),
        clouds=clouds,
        regime_fractions=fractions[:steps],
    )


def _run_dma_python(family, ys, N, rng, store_clouds):
    K = ys.shape[0]
    t0 = time.perf_counter()
    x0 = family.model.sample_initial(rng.child(INIT), N)
    labels = init_labels(family.regimes, N, rng.child(REGIME))
    cloud = ParticleCloud.uniform(0, x0, labels)
    estimates, ess_values, fractions = [], [], []
    clouds = [] if store_clouds else None
    failed, fail_k = False, None
    for kk in range(K):
        try:
            cloud, info = dma_bpf_step(family, cloud, ys[kk], rng.child(STEP, kk + 1))
        except DegeneracyError:
            failed, fail_k = True, kk + 1
            break
        estimates.append(info.estimate)
        ess_values.append(info.ess)
        fractions.append([(cloud.regimes == v).mean() for v in family.regimes.values])
        if store_clouds:
            clouds.append(cloud)
    wall = time.perf_counter() - t0
    return FilterOutput(
        estimates=np.array(estimates).reshape(len(estimates), family.model.state_dim),
        ess=np.asarray(ess_values),
        wall_seconds=wall,
        failed=failed,
        fail_k=fail_k,
        clouds=clouds,
        regime_fractions=np.asarray(fractions).reshape(len(estimates), len(family.regimes)),
    )
