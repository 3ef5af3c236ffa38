"""Privacy accountant tracking log-moments of the privacy loss.

The accountant keeps one accumulator per moment order on a fixed integer
grid. Two step types are supported:

* subsampled Gaussian (noisy-SGD critic updates): the accumulator for order
  ``l`` grows by ``log A_{l+1}`` where ``A_alpha`` is the exact integer-order
  moment of the sampled Gaussian mechanism,

      A_alpha = sum_i C(alpha, i) q^i (1-q)^(alpha-i) exp((i^2 - i) / (2 sigma^2))

* Laplace-noised vote labels: each labeled query is a sensitivity-1 Laplace
  mechanism with scale ``lam``, i.e. pure (1/lam)-DP, composed through the
  data-independent bound  min(l*e, l*(l+1)*e^2/2)  with e = 1/lam.

``epsilon_at`` converts accumulated moments to an (epsilon, delta) figure via
the standard tail bound, minimizing (moment + log(1/delta)) / order over the
grid. A fresh accountant reports 0.
"""

from __future__ import annotations

import json
import math

import numpy as np
from scipy import special

# 2..64 densely, then sparser high orders so that small per-step costs can
# still certify sub-0.1 epsilons (the conversion floor is log(1/delta)/max_order).
DEFAULT_ORDERS = tuple(range(2, 65)) + (80, 96, 128, 192, 256, 384, 512)


def subsampled_gaussian_log_moments(q: float, sigma: float, orders) -> np.ndarray:
    """Per-step log-moments of the subsampled Gaussian at integer orders."""
    if not (0.0 < q <= 1.0):
        raise ValueError("sampling rate q must lie in (0, 1]")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    out = np.empty(len(orders), dtype=np.float64)
    for idx, l in enumerate(orders):
        alpha = int(l) + 1
        i = np.arange(alpha + 1, dtype=np.float64)
        log_binom = (
            special.gammaln(alpha + 1)
            - special.gammaln(i + 1)
            - special.gammaln(alpha - i + 1)
        )
        terms = (
            log_binom
            + special.xlogy(i, q)
            + special.xlog1py(alpha - i, -q)
            + (i * i - i) / (2.0 * sigma * sigma)
        )
        out[idx] = special.logsumexp(terms)
    return out


def laplace_vote_log_moments(lam: float, orders, sensitivity: float = 1.0) -> np.ndarray:
    """Per-query log-moments for a sensitivity-bounded Laplace vote label."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    if sensitivity <= 0:
        raise ValueError("sensitivity must be positive")
    eps_q = sensitivity / lam
    l = np.asarray(orders, dtype=np.float64)
    return np.minimum(l * eps_q, 0.5 * eps_q * eps_q * l * (l + 1.0))


class MomentsAccountant:
    """Mutable per-run privacy-loss bookkeeping.

    One training run owns one accountant; mechanisms append steps and the
    stopping rule reads ``epsilon_at``. State serializes to JSON for audit
    logs.
    """

    def __init__(self, orders=DEFAULT_ORDERS):
        orders = tuple(int(o) for o in orders)
        if len(orders) == 0 or any(o < 1 for o in orders):
            raise ValueError("orders must be positive integers")
        if len(set(orders)) != len(orders):
            raise ValueError("duplicate moment orders")
        self.orders = orders
        self._orders_arr = np.asarray(orders, dtype=np.float64)
        self.log_moments = np.zeros(len(orders), dtype=np.float64)
        self.history: list[dict] = []

    # -- steps ---------------------------------------------------------------

    def step_subsampled_gaussian(self, q: float, sigma: float, steps: int = 1) -> "MomentsAccountant":
        if steps < 0:
            raise ValueError("steps must be >= 0")
        if steps == 0:
            return self
        inc = subsampled_gaussian_log_moments(q, sigma, self.orders)
        self.log_moments += steps * inc
        self._log_step("subsampled_gaussian", {"q": q, "sigma": sigma}, steps)
        return self

    def step_laplace_vote(
        self, lam: float, steps: int = 1, sensitivity: float = 1.0
    ) -> "MomentsAccountant":
        if steps < 0:
            raise ValueError("steps must be >= 0")
        if steps == 0:
            return self
        inc = laplace_vote_log_moments(lam, self.orders, sensitivity)
        self.log_moments += steps * inc
        self._log_step("laplace_vote", {"lam": lam, "sensitivity": sensitivity}, steps)
        return self

    def _log_step(self, kind: str, params: dict, steps: int) -> None:
        if self.history and self.history[-1]["kind"] == kind and self.history[-1]["params"] == params:
            self.history[-1]["steps"] += steps
        else:
            self.history.append({"kind": kind, "params": params, "steps": steps})

    # -- conversion ----------------------------------------------------------

    def epsilon_at(self, delta: float) -> float:
        """Minimum over tracked orders of the moments-to-(eps, delta) bound."""
        if not (0.0 < delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        if not self.history:
            return 0.0
        eps = (self.log_moments + math.log(1.0 / delta)) / self._orders_arr
        return float(eps.min())

    def epsilon_if(self, delta: float, extra_log_moments: np.ndarray) -> float:
        """epsilon_at(delta) as if the given increments had been appended."""
        if not (0.0 < delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        eps = (self.log_moments + extra_log_moments + math.log(1.0 / delta)) / self._orders_arr
        return float(eps.min())

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "orders": list(self.orders),
            "log_moments": [float(x) for x in self.log_moments],
            "history": self.history,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "MomentsAccountant":
        acct = cls(tuple(d["orders"]))
        acct.log_moments = np.asarray(d["log_moments"], dtype=np.float64)
        acct.history = [dict(h) for h in d["history"]]
        return acct

    @classmethod
    def from_json(cls, s: str) -> "MomentsAccountant":
        return cls.from_dict(json.loads(s))
