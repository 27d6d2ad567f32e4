"""Numpy implementations of the numerical kernels.

These mirror ``_kernels.pyx`` function for function and are used whenever the
compiled extension is unavailable (or disabled with ``SURVCAL_PURE_PYTHON=1``).
"""

import numpy as np

# rows per block in the leave-one-out factor matrix
_BLOCK_CELLS = 4_000_000


def event_table(times, events, t_max):
    """Distinct event times below ``t_max`` with event and at-risk counts."""
    sorted_times = np.sort(times)
    u, d = np.unique(times[events & (times < t_max)], return_counts=True)
    at_risk = times.shape[0] - np.searchsorted(sorted_times, u, side="left")
    return u.astype(np.float64), d.astype(np.float64), at_risk.astype(np.float64)


def _piece_widths(u, grid):
    # pieces [0, u_1), [u_1, u_2), ..., [u_J, inf) clipped to [0, t]
    starts = np.concatenate(([0.0], u))
    ends = np.concatenate((u, [np.inf]))
    w = np.minimum(ends[:, None], grid[None, :]) - starts[:, None]
    return np.clip(w, 0.0, None)


def _functional(curve, u, grid, restricted_mean):
    """Evaluate SP (left limit at t) or RM from rows of cumulative products."""
    n = curve.shape[0]
    values = np.concatenate((np.ones((n, 1)), curve), axis=1)
    if restricted_mean:
        return values @ _piece_widths(u, grid)
    k = np.searchsorted(u, grid, side="left")
    return values[:, k]


def jackknife_loo(times, events, grid, restricted_mean):
    """Full-sample and leave-one-out KM functionals.

    Returns ``(full, loo)`` with ``full`` of shape (G,) and ``loo`` of shape
    (N, G); ``loo[i]`` is the functional of the KM fit without row ``i``.
    """
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    grid = np.asarray(grid, dtype=np.float64)
    n = times.shape[0]
    u, d, y = event_table(times, events, grid.max())
    j = u.shape[0]

    safe = np.where(y > 0, y, 1.0)
    full_curve = np.cumprod(np.where(y > 0, 1.0 - d / safe, 1.0))[None, :]
    full = _functional(full_curve, u, grid, restricted_mean)[0]

    loo = np.empty((n, grid.shape[0]))
    block = max(1, _BLOCK_CELLS // max(j, 1))
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        ti = times[lo:hi, None]
        yi = y[None, :] - (ti >= u[None, :])
        di = d[None, :] - (events[lo:hi, None] & (ti == u[None, :]))
        safe = np.where(yi > 0, yi, 1.0)
        fac = np.where(yi > 0, 1.0 - di / safe, 1.0)
        loo[lo:hi] = _functional(np.cumprod(fac, axis=1), u, grid, restricted_mean)
    return full, loo


def best_split(X, y, features, min_leaf):
    """Exhaustive CART variance-reduction split search.

    Returns ``(feature, threshold, gain)``; ``feature == -1`` when no valid
    split exists.
    """
    n = y.shape[0]
    best_f, best_thr, best_gain = -1, 0.0, 0.0
    if n < 2 * min_leaf:
        return best_f, best_thr, best_gain
    left_n = np.arange(min_leaf, n - min_leaf + 1)
    for f in features:
        x = X[:, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        cs = np.cumsum(y[order])
        total = cs[-1]
        valid = xs[left_n - 1] < xs[left_n]
        if not valid.any():
            continue
        k = left_n[valid]
        s_left = cs[k - 1]
        s_right = total - s_left
        n_left = k.astype(np.float64)
        n_right = n - n_left
        gain = s_left * s_left / n_left + s_right * s_right / n_right - total * total / n
        pos = int(np.argmax(gain))
        if gain[pos] > best_gain:
            kk = k[pos]
            thr = 0.5 * (xs[kk - 1] + xs[kk])
            if thr >= xs[kk]:
                thr = xs[kk - 1]
            best_f, best_thr, best_gain = int(f), float(thr), float(gain[pos])
    return best_f, best_thr, best_gain


def concordance_counts(pred, times, events, tie_credit):
    """Numerator and denominator of the pairwise concordance index."""
    pred = np.asarray(pred, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    idx = np.flatnonzero(np.asarray(events, dtype=bool))
    num = 0.0
    den = 0
    block = max(1, _BLOCK_CELLS // max(times.shape[0], 1))
    for lo in range(0, idx.shape[0], block):
        rows = idx[lo:lo + block]
        later = times[None, :] > times[rows, None]
        den += int(later.sum())
        num += float((later & (pred[None, :] > pred[rows, None])).sum())
        if tie_credit:
            num += 0.5 * float((later & (pred[None, :] == pred[rows, None])).sum())
    return num, den
