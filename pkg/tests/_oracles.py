"""Independent reference implementations used to pin expected values.

Everything here is deliberately written by a different route than the library
code it checks: quadrature instead of closed forms, explicit loops instead of
vectorized algebra, brute-force tallies instead of incremental bookkeeping.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, optimize


# -- subsampled-Gaussian Renyi moments by numeric integration --------------------


def renyi_log_moment_quad(q: float, sigma: float, alpha: int) -> float:
    """log E[(mu/mu0)^alpha] for the mixture mu = (1-q) N(0,s^2) + q N(1,s^2),
    taken under whichever direction is larger, via adaptive quadrature in a
    max-shifted log space."""
    s2 = sigma * sigma

    def log_ratio(x):
        return np.logaddexp(math.log1p(-q), math.log(q) + (2.0 * x - 1.0) / (2.0 * s2))

    def log_integrand(x, a):
        # density of mu0 times ratio^a
        return a * log_ratio(x) - x * x / (2.0 * s2) - 0.5 * math.log(2.0 * math.pi * s2)

    out = []
    for a in (float(alpha), 1.0 - float(alpha)):
        peak = optimize.minimize_scalar(
            lambda x: -log_integrand(x, a), bounds=(-50 * sigma, abs(a) + 50 * sigma),
            method="bounded",
        )
        shift = -peak.fun

        def f(x, a=a, shift=shift):
            return math.exp(log_integrand(x, a) - shift)

        lo, hi = -60 * sigma, abs(a) + 60 * sigma
        val, _err = integrate.quad(f, lo, hi, limit=800, points=[0.0, 1.0, peak.x])
        out.append(shift + math.log(val))
    return max(out)


def epsilon_from_moments(log_moments, orders, delta: float) -> float:
    return min(
        (lm + math.log(1.0 / delta)) / l for lm, l in zip(log_moments, orders)
    )


def subsampled_gaussian_epsilon_quad(q, sigma, steps, delta, orders) -> float:
    moments = [steps * renyi_log_moment_quad(q, sigma, l + 1) for l in orders]
    return epsilon_from_moments(moments, orders, delta)


# -- finite differences ------------------------------------------------------------


def finite_difference_gradients(loss_fn, params: list[np.ndarray], h: float = 1e-6):
    """Central differences of a scalar loss with respect to each array."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            keep = p[idx]
            p[idx] = keep + h
            up = loss_fn()
            p[idx] = keep - h
            down = loss_fn()
            p[idx] = keep
            g[idx] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def plain_mlp_forward(layers, x: np.ndarray) -> np.ndarray:
    """Straight-line reimplementation of a dense forward pass."""
    out = x
    for w, b, act in layers:
        z = out @ w + b
        if act == "relu":
            out = np.where(z > 0, z, 0.0)
        elif act == "leaky-relu":
            out = np.where(z > 0, z, 0.2 * z)
        elif act == "tanh":
            out = np.tanh(z)
        elif act == "sigmoid":
            out = 1.0 / (1.0 + np.exp(-z))
        else:
            out = z
    return out


def adam_trajectory(grad_fn, theta0: float, lr: float, beta1: float, beta2: float,
                    eps: float, steps: int) -> list[float]:
    """Scalar Adam recurrence, spelled out step by step."""
    theta, m, v = theta0, 0.0, 0.0
    path = []
    for t in range(1, steps + 1):
        g = grad_fn(theta)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        theta = theta - lr * mhat / (math.sqrt(vhat) + eps)
        path.append(theta)
    return path


# -- probability helpers ------------------------------------------------------------


def laplace_race_probability(gap: float, scale: float, grid: int = 200_001,
                             span: float = 60.0) -> float:
    """P(c1 + L1 > c0 + L0) with c1 - c0 = gap, via numeric convolution of two
    Laplace densities on a grid."""
    half = span * scale
    xs = np.linspace(-half, half, grid)
    dx = xs[1] - xs[0]
    pdf = np.exp(-np.abs(xs) / scale) / (2.0 * scale)
    # density of D = L0 - L1 by discrete self-convolution (symmetric)
    conv = np.convolve(pdf, pdf[::-1]) * dx
    mid = len(conv) // 2
    # P(D < gap): integrate the difference density below the gap
    offs = np.arange(-mid, mid + 1) * dx
    return float(np.sum(conv[offs < gap]) * dx)


def mutual_information_plogp(table: np.ndarray) -> float:
    """MI in bits by direct summation over cells."""
    table = np.asarray(table, dtype=float)
    n = table.sum()
    mi = 0.0
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            pij = table[i, j] / n
            if pij == 0:
                continue
            pi = table[i, :].sum() / n
            pj = table[:, j].sum() / n
            mi += pij * math.log2(pij / (pi * pj))
    return mi


def confusion_metrics(y_true, y_pred, labels) -> dict:
    """Brute-force per-class precision/recall tally."""
    out = {}
    for lab in labels:
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == lab and p == lab)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != lab and p == lab)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == lab and p != lab)
        out[lab] = {
            "precision": tp / (tp + fp) if tp + fp else None,
            "recall": tp / (tp + fn) if tp + fn else None,
        }
    return out


def logistic_descent(x, y_pm, reg, lr=1.0, iters=200_000, tol=1e-10) -> np.ndarray:
    """Full-batch gradient descent on mean logistic loss + (reg/2)||w||^2."""
    w = np.zeros(x.shape[1])
    for _ in range(iters):
        t = y_pm * (x @ w)
        sig = 1.0 / (1.0 + np.exp(t))
        grad = -(x * (y_pm * sig)[:, None]).mean(axis=0) + reg * w
        w -= lr * grad
        if np.linalg.norm(grad) < tol:
            break
    return w
