"""Pieces shared by the two GAN synthesizers: generator construction,
block-softmax relaxation, and the generator update through a frozen critic."""

from __future__ import annotations

import numpy as np

from .data import OneHotEncoding
from . import nn


def make_generator(latent_dim: int, hidden: int, out_width: int, rng) -> nn.Mlp:
    return nn.Mlp.create(
        (latent_dim, hidden, hidden, out_width), ("relu", "relu", "identity"), rng
    )


def make_critic(in_width: int, hidden: int, rng) -> nn.Mlp:
    return nn.Mlp.create(
        (in_width, hidden, hidden, 1), ("leaky-relu", "leaky-relu", "identity"), rng
    )


def softmax_input_grad(enc: OneHotEncoding, probs: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Route d(loss)/d(probs) back through each block's softmax to the logits."""
    out = np.empty_like(grad)
    for _j, off, card in enc.blocks:
        p = probs[:, off : off + card]
        g = grad[:, off : off + card]
        inner = (g * p).sum(axis=1, keepdims=True)
        out[:, off : off + card] = p * (g - inner)
    return out


def generator_soft_batch(
    generator: nn.Mlp, enc: OneHotEncoding, batch: int, rng: np.random.Generator
):
    """Draw latent noise and return (forward cache, per-block softmax rows)."""
    z = rng.normal(0.0, 1.0, size=(batch, generator.in_dim))
    cache = nn.forward(generator, z)
    return cache, enc.softmax(cache.output)


def generator_hard_batch(
    generator: nn.Mlp, enc: OneHotEncoding, batch: int, rng: np.random.Generator
) -> np.ndarray:
    """Discrete fake rows (sampled one-hots), matching what real rows look like."""
    _, probs = generator_soft_batch(generator, enc, batch, rng)
    return enc.hard_rows(probs, rng)


def generator_step(
    generator: nn.Mlp,
    critic: nn.Mlp,
    enc: OneHotEncoding,
    opt: nn.Adam,
    batch: int,
    rng: np.random.Generator,
    critic_loss_grad,
) -> float:
    """One generator update against a frozen critic/student.

    The critic scores discrete (sampled) fake rows so it cannot key on the
    soft-vs-hard difference; the gradient returns to the generator
    straight-through, i.e. d(row)/d(probs) is treated as identity and then
    routed through the softmax jacobian.

    ``critic_loss_grad`` maps the critic's raw output (batch, 1) to
    d(generator loss)/d(critic output).
    """
    gcache, probs = generator_soft_batch(generator, enc, batch, rng)
    hard = enc.hard_rows(probs, rng)
    ccache = nn.forward(critic, hard)
    dout = critic_loss_grad(ccache.output)
    _, dhard = nn.backward(critic, ccache, dout)
    dlogits = softmax_input_grad(enc, probs, dhard)
    grads, _ = nn.backward(generator, gcache, dlogits)
    opt.step(generator, grads)
    return float(ccache.output.mean())
