"""Logistic regression, its objective-perturbation DP variant, and the
per-class / per-subgroup metrics used by the audit.

Features are one-hot encodings of the schema columns (class column excluded)
with an explicit bias column, rescaled so every row has unit l2 norm. The row
norm of a one-hot row is known from the schema alone, so the scaling is
public and spends no budget.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from sklearn.linear_model import LogisticRegression

from .base import check_epsilon, check_training_dataset, is_private
from .data import OneHotEncoding, TabularDataset, subgroup_rows

_LOGISTIC_SMOOTHNESS = 0.25  # curvature bound of the logistic loss on unit rows


def build_features(dataset: TabularDataset) -> tuple[np.ndarray, np.ndarray]:
    """Unit-norm one-hot design matrix (bias column last) and class labels."""
    enc = OneHotEncoding(dataset.schema)
    x, y = enc.feature_matrix(dataset)
    x = np.hstack([x, np.ones((x.shape[0], 1))])
    return x / math.sqrt(enc.feature_block_count + 1), y


@dataclass
class LrModel:
    """One-vs-rest linear classifier over the unit-norm feature space."""

    coef: np.ndarray  # (n_classes, d); binary models store a single row
    classes: np.ndarray
    kind: str
    reg: float
    epsilon: float = math.inf
    reg_raised: bool = False
    eps_prime: float | None = None

    def decision(self, x: np.ndarray) -> np.ndarray:
        return x @ self.coef.T

    def predict(self, x: np.ndarray) -> np.ndarray:
        scores = self.decision(x)
        if len(self.classes) == 2 and self.coef.shape[0] == 1:
            return self.classes[(scores[:, 0] > 0).astype(int)]
        return self.classes[scores.argmax(axis=1)]

    def predict_dataset(self, dataset: TabularDataset) -> np.ndarray:
        x, _ = build_features(dataset)
        return self.predict(x)


def _check_classes(y: np.ndarray) -> np.ndarray:
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError("training data contains a single class")
    return classes


def train_lr(dataset: TabularDataset, reg: float = 1e-3) -> LrModel:
    """L2-regularized logistic regression on the real/synthetic rows.

    Minimizes mean log-loss + (reg/2)||w||^2 via scikit-learn with the
    tolerance cranked down so the gradient norm at the solution is ~1e-6.
    """
    check_training_dataset(dataset)
    x, y = build_features(dataset)
    return _train_lr_xy(x, y, reg)


def _train_lr_xy(x: np.ndarray, y: np.ndarray, reg: float) -> LrModel:
    if reg <= 0:
        raise ValueError("reg must be positive")
    classes = _check_classes(y)
    n = x.shape[0]
    c = 1.0 / (n * reg)
    rows = []
    if len(classes) == 2:
        targets = [None]
    else:
        targets = list(classes)
    for target in targets:
        yb = y if target is None else np.where(y == target, classes.max() + 1, -1)
        clf = LogisticRegression(
            C=c, fit_intercept=False, tol=1e-12, max_iter=100_000, solver="lbfgs"
        )
        clf.fit(x, yb)
        rows.append(clf.coef_[0])
    return LrModel(np.vstack(rows), classes, kind="standard", reg=reg)


def objective_noise(d: int, eps_prime: float, rng: np.random.Generator) -> np.ndarray:
    """Perturbation vector: norm ~ Gamma(d, 2/eps_prime), uniform direction."""
    if eps_prime <= 0:
        raise ValueError("eps_prime must be positive")
    norm = rng.gamma(shape=d, scale=2.0 / eps_prime)
    direction = rng.normal(size=d)
    direction /= np.linalg.norm(direction)
    return norm * direction


def _dp_binary_fit(
    x: np.ndarray,
    y_pm: np.ndarray,
    epsilon: float,
    reg: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float, bool, float | None]:
    """Objective-perturbed fit for labels in {-1, +1}; returns (w, reg_used,
    reg_raised, eps_prime)."""
    n, d = x.shape
    if is_private(epsilon):
        eps_prime = epsilon - 2.0 * math.log1p(_LOGISTIC_SMOOTHNESS / (n * reg))
        reg_used, raised = reg, False
        if eps_prime <= 0:
            # smallest regularizer for which the perturbation analysis is valid
            reg_used = _LOGISTIC_SMOOTHNESS / (n * math.expm1(epsilon / 4.0))
            eps_prime = epsilon / 2.0
            raised = True
            warnings.warn(
                f"objective perturbation: reg raised from {reg:g} to {reg_used:g} "
                f"to keep the epsilon={epsilon:g} guarantee valid",
                stacklevel=3,
            )
        b = objective_noise(d, eps_prime, rng)
    else:
        eps_prime, reg_used, raised = None, reg, False
        b = np.zeros(d)

    def fun(w):
        t = y_pm * (x @ w)
        loss = np.logaddexp(0.0, -t).mean() + 0.5 * reg_used * w @ w + (b @ w) / n
        sig = 1.0 / (1.0 + np.exp(np.clip(t, -500, 500)))
        grad = -(x * (y_pm * sig)[:, None]).mean(axis=0) + reg_used * w + b / n
        return loss, grad

    res = optimize.minimize(
        fun, np.zeros(d), jac=True, method="L-BFGS-B",
        options={"gtol": 1e-12, "ftol": 0.0, "maxiter": 50_000},
    )
    return res.x, reg_used, raised, eps_prime


def train_dp_lr(
    dataset: TabularDataset,
    epsilon: float,
    reg: float = 1e-3,
    rng: np.random.Generator | None = None,
) -> LrModel:
    """Epsilon-DP logistic regression by perturbing the objective.

    The regularized log-loss gains a random linear term whose magnitude is
    calibrated to ``epsilon``; if the requested regularizer is too small for
    that calibration to be valid it is raised to the minimum valid value and
    the adjustment is recorded on the model. ``epsilon=inf`` is an exact
    no-noise path and matches :func:`train_lr` up to optimizer tolerance.
    Multi-class labels are handled one-vs-rest with the budget split evenly.
    """
    check_training_dataset(dataset)
    check_epsilon(epsilon)
    if reg <= 0:
        raise ValueError("reg must be positive")
    rng = np.random.default_rng() if rng is None else rng
    x, y = build_features(dataset)
    classes = _check_classes(y)
    if len(classes) == 2:
        fits = [(None, epsilon)]
    else:
        eps_each = epsilon / len(classes) if is_private(epsilon) else epsilon
        fits = [(target, eps_each) for target in classes]
    rows, raised_any, eps_prime = [], False, None
    for target, eps_fit in fits:
        if target is None:
            y_pm = np.where(y == classes[1], 1.0, -1.0)
        else:
            y_pm = np.where(y == target, 1.0, -1.0)
        w, reg_used, raised, ep = _dp_binary_fit(x, y_pm, eps_fit, reg, rng)
        rows.append(w)
        raised_any |= raised
        eps_prime = ep
    return LrModel(
        np.vstack(rows), classes, kind="dp", reg=reg_used,
        epsilon=epsilon, reg_raised=raised_any, eps_prime=eps_prime,
    )


# -- metrics -------------------------------------------------------------------


@dataclass
class MetricsReport:
    """Confusion-derived metrics; undefined precision stays NaN, never 0."""

    class_labels: tuple[str, ...]
    precision: dict[str, float]
    recall: dict[str, float]
    support: dict[str, int]
    subgroup_accuracy: dict[str, float]
    subgroup_support: dict[str, int]
    overall_accuracy: float
    test_size: int

    def to_dict(self) -> dict:
        return {
            "class_labels": list(self.class_labels),
            "precision": self.precision,
            "recall": self.recall,
            "support": self.support,
            "subgroup_accuracy": self.subgroup_accuracy,
            "subgroup_support": self.subgroup_support,
            "overall_accuracy": self.overall_accuracy,
            "test_size": self.test_size,
        }


def evaluate(model: LrModel, test: TabularDataset, subgroups=None) -> MetricsReport:
    """Per-class precision/recall and per-subgroup accuracy on a test set.

    ``subgroups`` is an optional list of :class:`SubgroupKey`; accuracy is
    reported for whichever test rows match each key (NaN when none do).
    """
    if test.n < 1:
        raise ValueError("empty test set")
    schema = test.schema
    y_true = test.column(schema.class_column)
    y_pred = model.predict_dataset(test)
    labels = schema.column(schema.class_column).categories
    precision, recall, support = {}, {}, {}
    for idx, label in enumerate(labels):
        truth = y_true == idx
        pred = y_pred == idx
        support[label] = int(truth.sum())
        tp = int((truth & pred).sum())
        precision[label] = float(tp / pred.sum()) if pred.any() else float("nan")
        recall[label] = float(tp / truth.sum()) if truth.any() else float("nan")
    sub_acc, sub_n = {}, {}
    for key in subgroups or ():
        rows = subgroup_rows(test, key)
        sub_acc[str(key)] = float((y_pred[rows] == y_true[rows]).mean()) if len(rows) else float("nan")
        sub_n[str(key)] = int(len(rows))
    return MetricsReport(
        class_labels=tuple(labels),
        precision=precision,
        recall=recall,
        support=support,
        subgroup_accuracy=sub_acc,
        subgroup_support=sub_n,
        overall_accuracy=float((y_pred == y_true).mean()),
        test_size=test.n,
    )
