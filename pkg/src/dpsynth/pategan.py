"""Teacher-ensemble GAN: privacy is enforced at the vote aggregation.

``n_teachers`` discriminators each see one disjoint partition of the real
rows and learn to separate their partition from generator output. The student
discriminator never touches real rows: it trains on generator samples labeled
by the teachers' Laplace-noised majority vote, and the generator trains
against the student. Every labeled sample charges the accountant one
Laplace-vote query; training stops when one more batch of labels would exceed
the budget.

The accounting is deliberately data independent (each query is billed as a
sensitivity-1 Laplace release regardless of how unanimous the teachers were),
which is conservative: tight budgets exhaust after far fewer labeled samples
than data-dependent analyses would allow.
"""

from __future__ import annotations

import json
import math

import numpy as np

from . import gan_core, nn
from .accounting import DEFAULT_ORDERS, MomentsAccountant, laplace_vote_log_moments
from .base import TabularSynthesizer, check_epsilon, is_private
from .data import OneHotEncoding, TabularDataset
from .schema import Schema


def partition_rows(n: int, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Split row indices into k disjoint covering parts, sizes differing by <= 1."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"cannot split {n} rows into {k} non-empty partitions")
    perm = rng.permutation(n)
    return [np.sort(part) for part in np.array_split(perm, k)]


def partition(dataset: TabularDataset, k: int, rng: np.random.Generator) -> list[TabularDataset]:
    return [dataset.take(rows) for rows in partition_rows(dataset.n, k, rng)]


def noisy_vote(teacher_labels, lam: float, rng: np.random.Generator) -> int:
    """Argmax over Laplace-noised vote counts for a binary ballot."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    votes = np.asarray(teacher_labels)
    if not np.isin(votes, (0, 1)).all():
        raise ValueError("votes must be binary")
    counts = np.array([(votes == 0).sum(), (votes == 1).sum()], dtype=np.float64)
    noisy = counts + rng.laplace(0.0, lam, size=2)
    return int(noisy[1] > noisy[0])


def majority_vote(teacher_labels, rng: np.random.Generator) -> int:
    votes = np.asarray(teacher_labels)
    n1 = int((votes == 1).sum())
    n0 = len(votes) - n1
    if n0 == n1:
        return int(rng.integers(2))
    return int(n1 > n0)


def derive_vote_noise(epsilon: float, delta: float, target_queries: int) -> float:
    """Smallest Laplace scale letting ``target_queries`` labeled samples fit.

    Inverts the accountant's quadratic (zCDP-style) bound: a budget of
    (epsilon, delta) admits a total squared-loss of
    rho = (sqrt(ln(1/delta) + epsilon) - sqrt(ln(1/delta)))**2, and N queries
    at scale lam cost about N / (2 lam^2), so lam = sqrt(N / (2 rho)).
    """
    big_l = math.log(1.0 / delta)
    rho = (math.sqrt(big_l + epsilon) - math.sqrt(big_l)) ** 2
    return math.sqrt(target_queries / (2.0 * rho))


class PateGanSynthesizer(TabularSynthesizer):
    """GAN trained through noisy teacher votes.

    Parameters
    ----------
    epsilon, delta : (epsilon, delta) budget; ``epsilon=inf`` uses exact
        majority votes and no accounting.
    n_teachers : discriminators over disjoint partitions (>= 2).
    vote_noise : Laplace scale on the vote counts; ``None`` derives it from
        the budget via :func:`derive_vote_noise` with
        ``target_queries = batch_size * max_rounds``.
    batch_size : generator samples labeled per round (one query each).
    max_rounds : teacher/student/generator rounds; the budget may stop
        training earlier.

    After ``fit``: ``epsilon_spent_``, ``query_count_``, ``degenerate_``
    (True when not even one batch of labels fit the budget),
    ``student_saw_real_`` (always False; the student trains only on
    generator output), ``vote_noise_``, ``training_log_``, ``accountant_``.
    """

    def __init__(
        self,
        epsilon: float = 1.0,
        delta: float = 1e-5,
        n_teachers: int = 10,
        vote_noise: float | None = None,
        batch_size: int = 64,
        max_rounds: int = 300,
        teacher_steps: int = 1,
        student_steps: int = 1,
        hidden: int = 64,
        teacher_hidden: int = 32,
        latent_dim: int = 32,
        lr: float = 0.02,
        lr_teacher: float = 0.05,
        student_weight_clip: float = 0.01,
        accountant_orders=None,
        random_state=None,
    ):
        self.epsilon = epsilon
        self.delta = delta
        self.n_teachers = n_teachers
        self.vote_noise = vote_noise
        self.batch_size = batch_size
        self.max_rounds = max_rounds
        self.teacher_steps = teacher_steps
        self.student_steps = student_steps
        self.hidden = hidden
        self.teacher_hidden = teacher_hidden
        self.latent_dim = latent_dim
        self.lr = lr
        self.lr_teacher = lr_teacher
        self.student_weight_clip = student_weight_clip
        self.accountant_orders = accountant_orders
        self.random_state = random_state

    # -- training ------------------------------------------------------------

    def _fit(self, dataset: TabularDataset, rng: np.random.Generator) -> None:
        eps = check_epsilon(self.epsilon)
        if self.delta <= 0 or self.delta >= 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.n_teachers < 2:
            raise ValueError("need at least two teachers")
        dp = is_private(eps)
        enc = OneHotEncoding(dataset.schema)
        x = enc.encode(dataset)
        parts = partition_rows(dataset.n, self.n_teachers, rng)
        if dp:
            lam = (
                derive_vote_noise(eps, self.delta, self.batch_size * self.max_rounds)
                if self.vote_noise is None
                else float(self.vote_noise)
            )
            if lam <= 0:
                raise ValueError("vote_noise must be positive")
        else:
            lam = None

        self.encoding_ = enc
        self.generator_ = gan_core.make_generator(self.latent_dim, self.hidden, enc.width, rng)
        self.student_ = nn.Mlp.create(
            (enc.width, self.hidden, self.hidden, 1),
            ("leaky-relu", "leaky-relu", "identity"),
            rng,
        )
        self.teachers_ = [
            nn.Mlp.create(
                (enc.width, self.teacher_hidden, 1), ("leaky-relu", "identity"), rng
            )
            for _ in range(self.n_teachers)
        ]
        opt_g = nn.Adam(self.lr, beta1=0.0, beta2=0.99)
        opt_s = nn.Adam(self.lr, beta1=0.0, beta2=0.99)
        opt_t = [nn.Adam(self.lr_teacher, beta1=0.0, beta2=0.99) for _ in range(self.n_teachers)]

        orders = DEFAULT_ORDERS if self.accountant_orders is None else self.accountant_orders
        acct = MomentsAccountant(orders)
        query_cost = (
            laplace_vote_log_moments(lam, acct.orders) * self.batch_size if dp else None
        )

        log: list[tuple[int, float, float]] = []
        queries = 0
        exhausted = False
        for rnd in range(self.max_rounds):
            if dp and acct.epsilon_if(self.delta, query_cost) > eps:
                exhausted = True
                break

            # 1. teachers: real partition batch vs. current generator output
            for t, rows in enumerate(parts):
                for _ in range(self.teacher_steps):
                    take = min(self.batch_size, len(rows))
                    ridx = rng.choice(rows, size=take, replace=False)
                    fake = gan_core.generator_hard_batch(self.generator_, enc, take, rng)
                    self._bce_update(self.teachers_[t], opt_t[t],
                                     np.vstack([x[ridx], fake]),
                                     np.concatenate([np.ones(take), np.zeros(take)]))

            # 2. student: noisy teacher labels on generator samples only
            student_loss = 0.0
            for _ in range(self.student_steps):
                fake = gan_core.generator_hard_batch(self.generator_, enc, self.batch_size, rng)
                votes = np.stack(
                    [nn.forward(t, fake).output[:, 0] > 0.0 for t in self.teachers_]
                ).astype(np.int64)
                if dp:
                    labels = np.array(
                        [noisy_vote(votes[:, j], lam, rng) for j in range(self.batch_size)]
                    )
                    acct.step_laplace_vote(lam, self.batch_size)
                else:
                    labels = np.array(
                        [majority_vote(votes[:, j], rng) for j in range(self.batch_size)]
                    )
                queries += self.batch_size
                student_loss = self._student_update(opt_s, fake, labels)

            # 3. generator: raise the student's score on its samples
            gan_core.generator_step(
                self.generator_, self.student_, enc, opt_g, self.batch_size, rng,
                critic_loss_grad=lambda out: -np.ones_like(out) / out.shape[0],
            )
            log.append((rnd + 1, student_loss, acct.epsilon_at(self.delta) if dp else 0.0))

        self.accountant_ = acct
        self.epsilon_spent_ = acct.epsilon_at(self.delta) if dp else 0.0
        self.vote_noise_ = lam
        self.query_count_ = queries
        self.degenerate_ = queries == 0
        self.exhausted_ = exhausted
        self.student_saw_real_ = False
        self.training_log_ = log

    @staticmethod
    def _bce_update(model: nn.Mlp, opt: nn.Adam, xb: np.ndarray, yb: np.ndarray) -> float:
        cache = nn.forward(model, xb)
        p = _sigmoid(cache.output[:, 0])
        grad = ((p - yb) / len(yb))[:, None]
        grads, _ = nn.backward(model, cache, grad)
        opt.step(model, grads)
        p = np.clip(p, 1e-12, 1.0 - 1e-12)
        return float(-(yb * np.log(p) + (1 - yb) * np.log(1 - p)).mean())

    def _student_update(self, opt: nn.Adam, xb: np.ndarray, yb: np.ndarray) -> float:
        """Wasserstein-style update: raise scores on voted-real samples, lower
        on voted-fake; weights stay clipped like a critic."""
        cache = nn.forward(self.student_, xb)
        sign = (2.0 * yb - 1.0)[:, None]
        grads, _ = nn.backward(self.student_, cache, -sign / len(yb))
        opt.step(self.student_, grads)
        self.student_.clip_weights(self.student_weight_clip)
        return float(-(sign * cache.output).mean())

    def _sample(self, m: int, rng: np.random.Generator) -> TabularDataset:
        _, probs = gan_core.generator_soft_batch(self.generator_, self.encoding_, m, rng)
        return self.encoding_.dataset_from_probs(probs, rng)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        self.check_fitted()
        return {
            "version": 1,
            "kind": "pate_gan",
            "schema": self.schema_.to_dict(),
            "n_train": self.n_train_,
            "generator": self.generator_.to_dict(),
            "student": self.student_.to_dict(),
            "accountant": self.accountant_.to_dict(),
            "epsilon_spent": self.epsilon_spent_,
            "degenerate": self.degenerate_,
            "query_count": self.query_count_,
            "vote_noise": self.vote_noise_,
            "params": {
                k: ("inf" if isinstance(v, float) and math.isinf(v) else v)
                for k, v in self.get_params().items()
                if k not in ("random_state", "accountant_orders")
            },
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def from_dict(cls, d: dict) -> "PateGanSynthesizer":
        if d.get("kind") != "pate_gan" or d.get("version") != 1:
            raise ValueError("not a version-1 pate_gan model file")
        params = {k: (math.inf if v == "inf" else v) for k, v in d["params"].items()}
        model = cls(**params)
        model.schema_ = Schema.from_dict(d["schema"])
        model.n_train_ = int(d["n_train"])
        model.encoding_ = OneHotEncoding(model.schema_)
        model.generator_ = nn.Mlp.from_dict(d["generator"])
        model.student_ = nn.Mlp.from_dict(d["student"])
        model.accountant_ = MomentsAccountant.from_dict(d["accountant"])
        model.epsilon_spent_ = float(d["epsilon_spent"])
        model.degenerate_ = bool(d["degenerate"])
        model.query_count_ = int(d["query_count"])
        model.vote_noise_ = d["vote_noise"]
        model.student_saw_real_ = False
        model.training_log_ = []
        return model

    @classmethod
    def load(cls, path) -> "PateGanSynthesizer":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))
