"""Core DP noise primitives: Laplace, Gaussian, and Exponential mechanisms.

Every mechanism takes an explicit generator and supports an infinite budget
as an exact no-op on values. Module-level call counters record how often each
noisy path ran, which lets the harness assert that infinite-budget runs never
touch a noise source.
"""

from __future__ import annotations

import math

import numpy as np

_CALLS = {"laplace": 0, "gaussian": 0, "exponential": 0}


def mechanism_calls() -> dict[str, int]:
    """Snapshot of the per-mechanism noisy-invocation counters."""
    return dict(_CALLS)


def reset_mechanism_calls() -> None:
    for k in _CALLS:
        _CALLS[k] = 0


def laplace_mechanism(value, sensitivity: float, epsilon: float, rng: np.random.Generator):
    """Add iid Laplace(sensitivity/epsilon) noise to each coordinate.

    An infinite epsilon returns the input unchanged (bitwise) and does not
    count as a noisy call.
    """
    if sensitivity <= 0:
        raise ValueError("sensitivity must be positive")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    value = np.asarray(value, dtype=np.float64)
    if math.isinf(epsilon):
        return value
    _CALLS["laplace"] += 1
    scale = sensitivity / epsilon
    return value + rng.laplace(0.0, scale, size=value.shape)


def gaussian_noise(shape, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """iid zero-mean normal noise with standard deviation sigma."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    _CALLS["gaussian"] += 1
    return rng.normal(0.0, sigma, size=shape)


def exponential_mechanism(
    candidates,
    utilities,
    sensitivity: float,
    epsilon: float,
    rng: np.random.Generator,
):
    """Select a candidate with probability proportional to exp(eps*u/(2*sens)).

    With an infinite epsilon this is a plain argmax; ties are broken by a
    seeded uniform choice among the maximizers.
    """
    candidates = list(candidates)
    utilities = np.asarray(utilities, dtype=np.float64)
    if len(candidates) == 0:
        raise ValueError("empty candidate list")
    if len(candidates) != len(utilities):
        raise ValueError("candidates and utilities differ in length")
    if sensitivity <= 0:
        raise ValueError("sensitivity must be positive")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if math.isinf(epsilon):
        best = np.flatnonzero(utilities == utilities.max())
        return candidates[int(rng.choice(best))]
    _CALLS["exponential"] += 1
    logits = epsilon * utilities / (2.0 * sensitivity)
    logits -= logits.max()
    p = np.exp(logits)
    p /= p.sum()
    return candidates[int(rng.choice(len(candidates), p=p))]
