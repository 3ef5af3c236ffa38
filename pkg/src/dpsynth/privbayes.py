"""Pure-epsilon Bayesian-network synthesizer.

Fitting has two noisy stages that split the budget exactly:

1. structure search: a greedy order is grown one node at a time; each step
   selects a (child, parent set) pair through the exponential mechanism with
   mutual-information utility, spending ``eps_structure / (d - 1)`` per step;
2. distribution estimation: each node's contingency table with its parents is
   noised with Laplace (frequency-domain scale ``2 d / (n * eps_params)``),
   negative counts are clipped at zero, and rows are normalized; rows that
   end up all-zero fall back to uniform.

The clip-then-normalize step is deliberately kept observable: it is the
mechanism that pushes heavily noised count tables toward uniform, which is
what evens out class and subgroup shares at small budgets.

Sampling is ancestral in the learned order.
"""

from __future__ import annotations

import itertools
import json
import math

import numpy as np
from scipy import special

from .base import TabularSynthesizer, check_epsilon, is_private
from .data import TabularDataset
from .mechanisms import exponential_mechanism, laplace_mechanism
from .schema import Schema


def mutual_information(joint_counts) -> float:
    """Mutual information (bits) of the empirical joint in a 2-way table."""
    t = np.asarray(joint_counts, dtype=np.float64)
    if t.ndim != 2:
        raise ValueError("expected a 2-way contingency table")
    if (t < 0).any():
        raise ValueError("counts must be non-negative")
    total = t.sum()
    if total <= 0:
        raise ValueError("table total must be positive")
    p = t / total
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    outer = px * py
    terms = special.xlogy(p, p) - special.xlogy(p, np.where(outer > 0, outer, 1.0))
    return float(terms.sum() / math.log(2.0))


def mi_utility_sensitivity(n: int) -> float:
    """Conservative global-sensitivity bound for empirical MI in bits."""
    return (math.log2(n) + 1.0) / n


def _joint_counts(values: np.ndarray, child: int, parents, cards) -> np.ndarray:
    """Child-by-parent-configuration count table."""
    child_card = cards[child]
    pcards = [cards[p] for p in parents]
    if parents:
        keys = np.ravel_multi_index(
            tuple(values[:, p] for p in parents), dims=tuple(pcards)
        )
    else:
        keys = np.zeros(values.shape[0], dtype=np.int64)
    nconf = int(np.prod(pcards)) if parents else 1
    flat = keys * child_card + values[:, child]
    return np.bincount(flat, minlength=nconf * child_card).reshape(nconf, child_card).astype(np.float64)


def build_network(
    dataset: TabularDataset,
    degree: int,
    epsilon_structure: float,
    rng: np.random.Generator,
    utility_sensitivity: float | None = None,
    max_parent_cells: int = 1_000_000,
) -> tuple[list[int], dict[int, tuple[int, ...]]]:
    """Greedy DP structure search.

    Returns the node order and per-node parent sets (indices into the schema
    columns). The first node is uniformly random; every later step runs the
    exponential mechanism over all (child, parent subset) candidates with
    ``|parents| <= min(degree, #chosen)``.
    """
    if degree < 1:
        raise ValueError("degree must be >= 1")
    check_epsilon(epsilon_structure)
    values = dataset.values
    cards = dataset.schema.cardinalities()
    d = len(cards)
    if d < 2:
        raise ValueError("structure search needs at least two columns")
    sens = mi_utility_sensitivity(dataset.n) if utility_sensitivity is None else utility_sensitivity
    eps_step = epsilon_structure / (d - 1) if is_private(epsilon_structure) else math.inf

    order = [int(rng.integers(d))]
    parents: dict[int, tuple[int, ...]] = {order[0]: ()}
    while len(order) < d:
        chosen = order
        remaining = [j for j in range(d) if j not in parents]
        candidates, utilities = [], []
        max_size = min(degree, len(chosen))
        for child in remaining:
            for size in range(1, max_size + 1):
                for pset in itertools.combinations(chosen, size):
                    cells = cards[child] * int(np.prod([cards[p] for p in pset]))
                    if cells > max_parent_cells:
                        continue
                    table = _joint_counts(values, child, pset, cards)
                    candidates.append((child, pset))
                    utilities.append(mutual_information(table))
        if not candidates:  # every subset over the cell guard: fall back to best single parent
            for child in remaining:
                for p in chosen:
                    candidates.append((child, (p,)))
                    utilities.append(mutual_information(_joint_counts(values, child, (p,), cards)))
        child, pset = exponential_mechanism(candidates, utilities, sens, eps_step, rng)
        order.append(child)
        parents[child] = tuple(pset)
    return order, parents


def estimate_cpds(
    dataset: TabularDataset,
    order,
    parents: dict[int, tuple[int, ...]],
    epsilon_params: float,
    rng: np.random.Generator,
) -> dict[int, np.ndarray]:
    """Noisy conditional tables for every node, rows normalized to sum 1."""
    check_epsilon(epsilon_params)
    values = dataset.values
    cards = dataset.schema.cardinalities()
    d = len(order)
    eps_table = epsilon_params / d if is_private(epsilon_params) else math.inf
    cpts: dict[int, np.ndarray] = {}
    for node in order:
        counts = _joint_counts(values, node, parents[node], cards)
        noisy = laplace_mechanism(counts, sensitivity=2.0, epsilon=eps_table, rng=rng)
        noisy = np.maximum(noisy, 0.0)
        row_sums = noisy.sum(axis=1, keepdims=True)
        zero = row_sums[:, 0] <= 0.0
        noisy[zero] = 1.0
        row_sums[zero] = noisy.shape[1]
        cpts[node] = noisy / row_sums
    return cpts


class PrivBayesSynthesizer(TabularSynthesizer):
    """Bayesian-network synthesizer with a pure-epsilon guarantee.

    Parameters
    ----------
    epsilon : total privacy budget; ``inf`` disables all noise.
    degree : maximum parents per node.
    structure_fraction : share of the budget spent on structure search; the
        remainder goes to the conditional tables (recorded exactly).
    utility_sensitivity : override for the MI utility sensitivity; defaults
        to a conservative (log2(n) + 1) / n bound.
    max_parent_cells : candidate parent sets whose table would exceed this
        many cells are skipped during structure search.
    """

    def __init__(
        self,
        epsilon: float = 1.0,
        degree: int = 3,
        structure_fraction: float = 0.5,
        utility_sensitivity: float | None = None,
        max_parent_cells: int = 1_000_000,
        random_state=None,
    ):
        self.epsilon = epsilon
        self.degree = degree
        self.structure_fraction = structure_fraction
        self.utility_sensitivity = utility_sensitivity
        self.max_parent_cells = max_parent_cells
        self.random_state = random_state

    def _fit(self, dataset: TabularDataset, rng: np.random.Generator) -> None:
        eps = check_epsilon(self.epsilon)
        if not (0.0 < self.structure_fraction < 1.0):
            raise ValueError("structure_fraction must lie in (0, 1)")
        if is_private(eps):
            eps_structure = self.structure_fraction * eps
            eps_params = eps - eps_structure  # exact complement by construction
        else:
            eps_structure = eps_params = math.inf
        self.order_, self.parents_ = build_network(
            dataset,
            self.degree,
            eps_structure,
            rng,
            utility_sensitivity=self.utility_sensitivity,
            max_parent_cells=self.max_parent_cells,
        )
        self.cpts_ = estimate_cpds(dataset, self.order_, self.parents_, eps_params, rng)
        self.budget_split_ = (eps_structure, eps_params)

    def _sample(self, m: int, rng: np.random.Generator) -> TabularDataset:
        cards = self.schema_.cardinalities()
        out = np.zeros((m, len(cards)), dtype=np.int64)
        for node in self.order_:
            cpt = self.cpts_[node]
            pset = self.parents_[node]
            if pset:
                keys = np.ravel_multi_index(
                    tuple(out[:, p] for p in pset), dims=tuple(cards[p] for p in pset)
                )
                probs = cpt[keys]
            else:
                probs = np.broadcast_to(cpt[0], (m, cpt.shape[1]))
            cdf = np.cumsum(probs, axis=1)
            cdf[:, -1] = np.maximum(cdf[:, -1], 1.0)
            r = rng.random(m)
            out[:, node] = (r[:, None] < cdf).argmax(axis=1)
        return TabularDataset(self.schema_, out, discretized=True, provenance="synthetic")

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        self.check_fitted()
        return {
            "version": 1,
            "kind": "bayes_net",
            "schema": self.schema_.to_dict(),
            "n_train": self.n_train_,
            "order": list(self.order_),
            "parents": {str(k): list(v) for k, v in self.parents_.items()},
            "cpts": {str(k): v.tolist() for k, v in self.cpts_.items()},
            "budget_split": [
                "inf" if math.isinf(b) else b for b in self.budget_split_
            ],
            "params": {"epsilon": "inf" if math.isinf(self.epsilon) else self.epsilon,
                       "degree": self.degree,
                       "structure_fraction": self.structure_fraction},
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def from_dict(cls, d: dict) -> "PrivBayesSynthesizer":
        if d.get("kind") != "bayes_net" or d.get("version") != 1:
            raise ValueError("not a version-1 bayes_net model file")
        params = d["params"]
        eps = math.inf if params["epsilon"] == "inf" else params["epsilon"]
        model = cls(epsilon=eps, degree=params["degree"],
                    structure_fraction=params["structure_fraction"])
        model.schema_ = Schema.from_dict(d["schema"])
        model.n_train_ = int(d["n_train"])
        model.order_ = [int(x) for x in d["order"]]
        model.parents_ = {int(k): tuple(v) for k, v in d["parents"].items()}
        model.cpts_ = {int(k): np.asarray(v, dtype=np.float64) for k, v in d["cpts"].items()}
        model.budget_split_ = tuple(
            math.inf if b == "inf" else float(b) for b in d["budget_split"]
        )
        return model

    @classmethod
    def load(cls, path) -> "PrivBayesSynthesizer":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))
