"""Brute-force reference implementations used only by the tests.

They evaluate likelihoods with dense linear algebra (``slogdet`` and
``solve``) and maximize by nested grid search, sharing no code with the
package's spectral optimizers.
"""
import numpy as np


def dense_loglik(y, k, sigma2, eta2):
    """Average log-likelihood (up to the constant) of ``y ~ N(0, sigma2 (eta2 K + I))``."""
    n = y.shape[0]
    v = eta2 * k + np.eye(n)
    _, logdet = np.linalg.slogdet(v)
    quad = y @ np.linalg.solve(v, y)
    return -0.5 * np.log(sigma2) - logdet / (2 * n) - quad / (2 * n * sigma2)


def _single_kernel_table(y, k, t_grid):
    n = y.shape[0]
    out = []
    for t in t_grid:
        v = np.exp(t) * k + np.eye(n)
        _, logdet = np.linalg.slogdet(v)
        out.append((logdet, y @ np.linalg.solve(v, y)))
    return np.array(out)


def grid_mle_h2(y, k, t_range=(-np.log(1e6), np.log(1e6)), points=400, stages=2):
    """2-D grid search over ``(log eta2, log sigma2)`` with zooming."""
    n = y.shape[0]
    lo, hi = t_range
    vy = y @ y / n
    s_lo, s_hi = np.log(vy * 1e-7), np.log(vy * 2)
    best = None
    for stage in range(stages):
        t_grid = np.linspace(lo, hi, points)
        s_grid = np.linspace(s_lo, s_hi, points)
        table = _single_kernel_table(y, k, t_grid)
        s2 = np.exp(s_grid)
        ll = (
            -0.5 * s_grid[None, :]
            - table[:, :1] / (2 * n)
            - table[:, 1:] / (2 * n * s2[None, :])
        )
        i, j = np.unravel_index(np.argmax(ll), ll.shape)
        best = (t_grid[i], s_grid[j])
        dt = (hi - lo) / (points - 1)
        ds = (s_hi - s_lo) / (points - 1)
        lo, hi = max(t_range[0], best[0] - 2 * dt), min(t_range[1], best[0] + 2 * dt)
        s_lo, s_hi = best[1] - 2 * ds, best[1] + 2 * ds
    eta2 = np.exp(best[0])
    return eta2 / (1 + eta2), eta2, np.exp(best[1])


def two_component_loglik(y, ks, kc, s_s, s_c, s_e):
    n = y.shape[0]
    v = s_s * ks + s_c * kc + s_e * np.eye(n)
    _, logdet = np.linalg.slogdet(v)
    return -0.5 * (logdet + y @ np.linalg.solve(v, y) + n * np.log(2 * np.pi))


def grid_two_component(y, ks, kc, points=61, stages=4, span=(-12.0, 5.0)):
    """Grid over ratios ``a = s_S / s_e`` and ``b = s_Sc / s_e`` (log scale, with zoom).

    ``s_e`` is profiled exactly: ``s_e = y' M^{-1} y / n`` with ``M = a K_S + b K_Sc + I``.
    """
    n = y.shape[0]
    a_lo, a_hi = span
    b_lo, b_hi = span
    best = None
    for _ in range(stages):
        ag = np.linspace(a_lo, a_hi, points)
        bg = np.linspace(b_lo, b_hi, points)
        ll = np.empty((points, points))
        for i, la in enumerate(ag):
            for j, lb in enumerate(bg):
                m = np.exp(la) * ks + np.exp(lb) * kc + np.eye(n)
                _, logdet = np.linalg.slogdet(m)
                se = y @ np.linalg.solve(m, y) / n
                ll[i, j] = -0.5 * (logdet + n * np.log(se))
        i, j = np.unravel_index(np.argmax(ll), ll.shape)
        best = (ag[i], bg[j])
        da, db = (a_hi - a_lo) / (points - 1), (b_hi - b_lo) / (points - 1)
        a_lo, a_hi = max(span[0], best[0] - 2 * da), min(span[1], best[0] + 2 * da)
        b_lo, b_hi = max(span[0], best[1] - 2 * db), min(span[1], best[1] + 2 * db)
    a, b = np.exp(best[0]), np.exp(best[1])
    m = a * ks + b * kc + np.eye(n)
    se = y @ np.linalg.solve(m, y) / n
    return a * se, b * se, se
