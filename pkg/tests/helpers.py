"""Independent oracles shared by unit and acceptance tests.

Everything here is deliberately written the slow, obvious way so it cannot
share a code path with the implementations it checks.
"""
import numpy as np

from flowcomm.metrics import DYNAMIC_RANGE, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW


def brute_force_ssim(ya: np.ndarray, yb: np.ndarray) -> float:
    """Per-window SSIM with explicit loops over every valid window position."""
    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2
    half = (SSIM_WINDOW - 1) / 2.0
    g = np.exp(-((np.arange(SSIM_WINDOW) - half) ** 2) / (2.0 * SSIM_SIGMA**2))
    g /= g.sum()
    w = np.outer(g, g)
    h, wd = ya.shape
    scores = []
    for i in range(h - SSIM_WINDOW + 1):
        for j in range(wd - SSIM_WINDOW + 1):
            a = ya[i : i + SSIM_WINDOW, j : j + SSIM_WINDOW]
            b = yb[i : i + SSIM_WINDOW, j : j + SSIM_WINDOW]
            mu_a = np.sum(w * a)
            mu_b = np.sum(w * b)
            var_a = np.sum(w * a * a) - mu_a**2
            var_b = np.sum(w * b * b) - mu_b**2
            cov = np.sum(w * a * b) - mu_a * mu_b
            scores.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
            )
    return float(np.mean(scores))


def grid_search_allocation(loads, snrs, bandwidth, step_fraction=1e-3):
    """Exhaustive min-max-time search over the allocation simplex grid.

    Supports 2 and 3 UEs; fractions move in multiples of step_fraction.
    Returns (best fractions, best t_max).
    """
    loads = np.asarray(loads, dtype=np.float64)
    c = np.log2(1.0 + np.asarray(snrs, dtype=np.float64))
    w = loads / c
    n_steps = int(round(1.0 / step_fraction))
    if len(loads) == 2:
        f1 = np.arange(1, n_steps) / n_steps
        t = np.maximum(w[0] / (f1 * bandwidth), w[1] / ((1.0 - f1) * bandwidth))
        k = int(np.argmin(t))
        return np.array([f1[k], 1.0 - f1[k]]), float(t[k])
    if len(loads) == 3:
        f1 = (np.arange(1, n_steps) / n_steps)[:, None]
        f2 = (np.arange(1, n_steps) / n_steps)[None, :]
        f3 = 1.0 - f1 - f2
        valid = f3 > 0
        t = np.full(valid.shape, np.inf)
        t1 = w[0] / (f1 * bandwidth)
        t2 = w[1] / (f2 * bandwidth)
        with np.errstate(divide="ignore", invalid="ignore"):
            t3 = np.where(valid, w[2] / (f3 * bandwidth), np.inf)
        t = np.maximum(np.maximum(np.broadcast_to(t1, t3.shape), np.broadcast_to(t2, t3.shape)), t3)
        k = np.unravel_index(np.argmin(t), t.shape)
        best = np.array([f1[k[0], 0], f2[0, k[1]], 1.0 - f1[k[0], 0] - f2[0, k[1]]])
        return best, float(t[k])
    raise ValueError("grid search supports 2 or 3 UEs")


def numeric_gradients(net, x, upstream, eps=1e-5):
    """Central-difference parameter gradients of loss = upstream . net(x)."""
    upstream = np.asarray(upstream, dtype=np.float64)
    grads = []
    for l in range(len(net.weights)):
        layer = []
        for param in (net.weights[l], net.biases[l]):
            g = np.zeros_like(param)
            it = np.nditer(param, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = param[idx]
                param[idx] = orig + eps
                up = float(np.sum(upstream * net.forward(x)))
                param[idx] = orig - eps
                down = float(np.sum(upstream * net.forward(x)))
                param[idx] = orig
                g[idx] = (up - down) / (2.0 * eps)
            layer.append(g)
        grads.append(tuple(layer))
    return grads


def max_relative_gradient_error(net, x, upstream, eps=1e-5) -> float:
    """Worst relative mismatch between analytic and numeric gradients."""
    net.forward(x, record=True)
    analytic, _ = net.backward(upstream)
    numeric = numeric_gradients(net, x, upstream, eps)
    worst = 0.0
    for (adw, adb), (ndw, ndb) in zip(analytic, numeric):
        for a, n in ((adw, ndw), (adb, ndb)):
            denom = np.maximum(np.abs(a) + np.abs(n), 1e-8)
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
