"""Independent closed-form oracles used by the test suite."""

import numpy as np


def kalman_filter_1d(F, q, h, r, m0, p0, ys):
    """Scalar Kalman filter, written directly from the conjugate algebra."""
    m, p = m0, p0
    means, variances = [], []
    for y in np.asarray(ys).reshape(-1):
        m_pred = F * m
        p_pred = F * p * F + q
        s = h * p_pred * h + r
        gain = p_pred * h / s
        m = m_pred + gain * (y - h * m_pred)
        p = (1.0 - gain * h) * p_pred
        means.append(m)
        variances.append(p)
    return np.asarray(means), np.asarray(variances)


def pbps_limit_1d(F, q, h, r, m0, p0, ys):
    """Exact large-N law of the deterministic-offspring smoothing recursion
    on a scalar linear-Gaussian model.

    Each step: conjugate predict, update with y_k through (h, r), then update
    with y_{k+1} through the offspring observation map (h*F, r); the updated
    belief both is reported and feeds the next step.
    """
    ys = np.asarray(ys).reshape(-1)
    K = ys.shape[0]
    m, p = m0, p0
    means, variances = [], []
    for k in range(K):
        m_pred = F * m
        p_pred = F * p * F + q
        s = h * p_pred * h + r
        gain = p_pred * h / s
        m = m_pred + gain * (ys[k] - h * m_pred)
        p = (1.0 - gain * h) * p_pred
        if k + 1 < K:
            h2 = h * F
            s2 = h2 * p * h2 + r
            gain2 = p * h2 / s2
            m = m + gain2 * (ys[k + 1] - h2 * m)
            p = (1.0 - gain2 * h2) * p
        means.append(m)
        variances.append(p)
    return np.asarray(means), np.asarray(variances)
