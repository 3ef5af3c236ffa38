"""Wasserstein GAN with noisy, clipped critic updates.

The critic is the only part that touches real rows, so privacy is enforced
there: per-example gradients are clipped to a fixed norm, summed, and noised
with a Gaussian whose scale is ``noise_multiplier * clip_norm``. Every critic
batch charges the accountant one subsampled-Gaussian step at sampling rate
``batch_size / n``; training stops as soon as one more step would exceed the
budget. Generator updates only see critic outputs and are free
post-processing.

With an infinite budget the clip/noise/accounting path is disabled entirely,
so the run degrades to a plain weight-clipped WGAN.
"""

from __future__ import annotations

import json
import math

import numpy as np

from . import gan_core, nn
from .accounting import DEFAULT_ORDERS, MomentsAccountant, subsampled_gaussian_log_moments
from .base import TabularSynthesizer, check_epsilon, is_private
from .data import OneHotEncoding, TabularDataset
from .mechanisms import gaussian_noise
from .schema import Schema


def critic_batch_gradient(
    critic: nn.Mlp,
    x_real: np.ndarray,
    x_fake: np.ndarray,
    clip_norm: float | None,
    sigma: float,
    rng: np.random.Generator,
) -> tuple[list[np.ndarray], float]:
    """Average critic gradient of mean f(fake) - mean f(real) over a batch.

    When ``clip_norm`` is set, each example's paired gradient
    (one real row, one fake row) is clipped before summation and Gaussian
    noise of scale ``sigma * clip_norm`` is added to the sum. Returns the
    per-parameter averaged gradients and the critic loss.
    """
    b = x_real.shape[0]
    cache_f = nn.forward(critic, x_fake)
    cache_r = nn.forward(critic, x_real)
    ones = np.ones((b, 1))
    loss = float(cache_f.output.mean() - cache_r.output.mean())
    if clip_norm is None:
        gf, _ = nn.backward(critic, cache_f, ones)
        gr, _ = nn.backward(critic, cache_r, -ones)
        summed = [a + c for a, c in zip(gf.grads, gr.grads)]
    else:
        gf = nn.backward_per_example(critic, cache_f, ones)
        gr = nn.backward_per_example(critic, cache_r, -ones)
        paired = nn.GradientSet(
            [a + c for a, c in zip(gf.grads, gr.grads)], per_example=True
        )
        clipped = paired.clipped(clip_norm)
        summed = clipped.summed().grads
        if sigma > 0.0:
            summed = [g + gaussian_noise(g.shape, sigma * clip_norm, rng) for g in summed]
    return [g / b for g in summed], loss


class DpWganSynthesizer(TabularSynthesizer):
    """Tabular WGAN with clipped, noised critic gradients.

    Parameters
    ----------
    epsilon, delta : (epsilon, delta) budget; ``epsilon=inf`` turns DP off.
    noise_multiplier : Gaussian scale relative to the clip norm.
    clip_norm : per-example l2 clip on critic gradients.
    batch_size : rows per critic batch (also the sampling rate numerator).
    critic_rounds : critic updates per generator update.
    weight_clip : hard bound applied to critic weights after every update.
    max_critic_steps : iteration cap; the budget may stop training earlier.

    After ``fit``:  ``epsilon_spent_``, ``degenerate_`` (True when the budget
    allowed no critic step at all), ``training_log_`` rows of
    (iteration, critic_loss, epsilon_spent), and ``accountant_``.
    """

    def __init__(
        self,
        epsilon: float = 1.0,
        delta: float = 1e-5,
        noise_multiplier: float = 1.1,
        clip_norm: float = 1.0,
        batch_size: int = 64,
        critic_rounds: int = 5,
        weight_clip: float = 0.01,
        max_critic_steps: int = 2000,
        hidden: int = 64,
        latent_dim: int = 32,
        lr_critic: float = 0.02,
        lr_generator: float = 0.02,
        accountant_orders=None,
        random_state=None,
    ):
        self.epsilon = epsilon
        self.delta = delta
        self.noise_multiplier = noise_multiplier
        self.clip_norm = clip_norm
        self.batch_size = batch_size
        self.critic_rounds = critic_rounds
        self.weight_clip = weight_clip
        self.max_critic_steps = max_critic_steps
        self.hidden = hidden
        self.latent_dim = latent_dim
        self.lr_critic = lr_critic
        self.lr_generator = lr_generator
        self.accountant_orders = accountant_orders
        self.random_state = random_state

    def _fit(self, dataset: TabularDataset, rng: np.random.Generator) -> None:
        eps = check_epsilon(self.epsilon)
        if self.delta <= 0 or self.delta >= 1:
            raise ValueError("delta must lie in (0, 1)")
        for name in ("noise_multiplier", "clip_norm", "batch_size", "critic_rounds",
                     "weight_clip", "max_critic_steps", "hidden", "latent_dim",
                     "lr_critic", "lr_generator"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        dp = is_private(eps)
        enc = OneHotEncoding(dataset.schema)
        x = enc.encode(dataset)
        n = dataset.n
        b = min(self.batch_size, n)
        q = b / n

        self.encoding_ = enc
        self.generator_ = gan_core.make_generator(self.latent_dim, self.hidden, enc.width, rng)
        self.critic_ = gan_core.make_critic(enc.width, self.hidden, rng)
        # beta1=0 gives RMSprop-style steps, the usual choice for a clipped
        # critic; the generator keeps momentum to average over critic noise
        opt_c = nn.Adam(self.lr_critic, beta1=0.0, beta2=0.99)
        opt_g = nn.Adam(self.lr_generator, beta1=0.9, beta2=0.999)

        orders = DEFAULT_ORDERS if self.accountant_orders is None else self.accountant_orders
        acct = MomentsAccountant(orders)
        step_cost = subsampled_gaussian_log_moments(q, self.noise_multiplier, acct.orders) if dp else None

        log: list[tuple[int, float, float]] = []
        it = 0
        exhausted = False
        while it < self.max_critic_steps and not exhausted:
            for _ in range(self.critic_rounds):
                if it >= self.max_critic_steps:
                    break
                if dp:
                    if acct.epsilon_if(self.delta, step_cost) > eps:
                        exhausted = True
                        break
                    acct.step_subsampled_gaussian(q, self.noise_multiplier, 1)
                idx = rng.choice(n, size=b, replace=False)
                fake = gan_core.generator_hard_batch(self.generator_, enc, b, rng)
                grads, loss = critic_batch_gradient(
                    self.critic_,
                    x[idx],
                    fake,
                    self.clip_norm if dp else None,
                    self.noise_multiplier if dp else 0.0,
                    rng,
                )
                opt_c.step(self.critic_, nn.GradientSet(grads, per_example=False))
                self.critic_.clip_weights(self.weight_clip)
                it += 1
                log.append((it, loss, acct.epsilon_at(self.delta) if dp else 0.0))
            if exhausted or it >= self.max_critic_steps:
                break
            gan_core.generator_step(
                self.generator_, self.critic_, enc, opt_g, b, rng,
                critic_loss_grad=lambda out: -np.ones_like(out) / out.shape[0],
            )

        self.accountant_ = acct
        self.epsilon_spent_ = acct.epsilon_at(self.delta) if dp else 0.0
        self.critic_updates_ = it
        self.degenerate_ = it == 0
        self.training_log_ = log

    def _sample(self, m: int, rng: np.random.Generator) -> TabularDataset:
        _, probs = gan_core.generator_soft_batch(self.generator_, self.encoding_, m, rng)
        return self.encoding_.dataset_from_probs(probs, rng)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        self.check_fitted()
        return {
            "version": 1,
            "kind": "dp_wgan",
            "schema": self.schema_.to_dict(),
            "n_train": self.n_train_,
            "generator": self.generator_.to_dict(),
            "critic": self.critic_.to_dict(),
            "accountant": self.accountant_.to_dict(),
            "epsilon_spent": self.epsilon_spent_,
            "degenerate": self.degenerate_,
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
    def from_dict(cls, d: dict) -> "DpWganSynthesizer":
        if d.get("kind") != "dp_wgan" or d.get("version") != 1:
            raise ValueError("not a version-1 dp_wgan model file")
        params = {
            k: (math.inf if v == "inf" else v) for k, v in d["params"].items()
        }
        model = cls(**params)
        model.schema_ = Schema.from_dict(d["schema"])
        model.n_train_ = int(d["n_train"])
        model.encoding_ = OneHotEncoding(model.schema_)
        model.generator_ = nn.Mlp.from_dict(d["generator"])
        model.critic_ = nn.Mlp.from_dict(d["critic"])
        model.accountant_ = MomentsAccountant.from_dict(d["accountant"])
        model.epsilon_spent_ = float(d["epsilon_spent"])
        model.degenerate_ = bool(d["degenerate"])
        model.training_log_ = []
        return model

    @classmethod
    def load(cls, path) -> "DpWganSynthesizer":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))
