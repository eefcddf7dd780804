"""
Scalar objectives for the adversarial game, all as minimised losses in nats.

Probabilities are clamped to [EPS, 1 - EPS] before every log so that exact
0/1 outputs give finite values. The discriminator maximises
log D_r(x) + log D_c(c|x) + log(1 - D_r(G(z))); the generator minimises a
non-saturating adversarial term plus the style-ambiguity cross entropy
against a uniform target over the K style classes.
"""
import math
from typing import Optional

import torch

EPS = 1e-7


def _log(p):
    return torch.log(torch.clamp(p, EPS, 1.0 - EPS))


def _log1m(p):
    return torch.log(1.0 - torch.clamp(p, EPS, 1.0 - EPS))


def bce_real(real_probs: torch.Tensor) -> torch.Tensor:
    """-mean log D_r(x) over real samples."""
    return -_log(real_probs).mean()


def bce_fake(fake_probs: torch.Tensor) -> torch.Tensor:
    """-mean log(1 - D_r(G(z))) over generated samples."""
    return -_log1m(fake_probs).mean()


def g_adversarial_loss(fake_probs: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator term, -mean log D_r(G(z))."""
    return -_log(fake_probs).mean()


def g_saturating_loss(fake_probs: torch.Tensor) -> torch.Tensor:
    """The literal minimax generator term, mean log(1 - D_r(G(z)))."""
    return _log1m(fake_probs).mean()


def d_style_loss(style_probs: torch.Tensor, labels) -> torch.Tensor:
    """-mean log of the probability assigned to each sample's true style."""
    labels = torch.as_tensor(labels, dtype=torch.long, device=style_probs.device)
    k = style_probs.shape[1]
    if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= k):
        raise ValueError(f"style labels must lie in [0, {k})")
    picked = style_probs.gather(1, labels.reshape(-1, 1)).squeeze(1)
    return -_log(picked).mean()


def style_ambiguity_loss(style_probs: torch.Tensor) -> torch.Tensor:
    """Cross entropy of each style probability against the uniform target 1/K.

    Per row: sum_k -[(1/K) log p_k + (1 - 1/K) log(1 - p_k)], averaged over
    the batch. The minimum over the simplex, at the uniform row, is
    ln K + (K - 1) ln(K / (K - 1)).
    """
    k = style_probs.shape[1]
    per_class = (1.0 / k) * _log(style_probs) + (1.0 - 1.0 / k) * _log1m(style_probs)
    return -per_class.sum(dim=1).mean()


def ambiguity_minimum(k: int) -> float:
    return math.log(k) + (k - 1) * math.log(k / (k - 1))


def can_generator_loss(fake_real_probs, fake_style_probs: Optional[torch.Tensor] = None):
    """Adversarial term plus style ambiguity (dcgan: adversarial term only)."""
    loss = g_adversarial_loss(fake_real_probs)
    if fake_style_probs is not None:
        loss = loss + style_ambiguity_loss(fake_style_probs)
    return loss


def can_discriminator_loss(real_probs, fake_probs, real_style_probs=None, labels=None):
    """bce_real + bce_fake, plus the style classification loss on real images when a style head exists."""
    loss = bce_real(real_probs) + bce_fake(fake_probs)
    if real_style_probs is not None:
        if labels is None:
            raise ValueError("style labels are required with a style head")
        loss = loss + d_style_loss(real_style_probs, labels)
    return loss


def discriminator_loss_terms(real_out, fake_out, labels=None) -> dict:
    """Individual discriminator loss components from two DiscriminatorOutputs."""
    terms = {"bce_real": bce_real(real_out.real_prob), "bce_fake": bce_fake(fake_out.real_prob)}
    if real_out.style_probs is not None:
        terms["d_style"] = d_style_loss(real_out.style_probs, labels)
    return terms


def generator_loss_terms(fake_out) -> dict:
    terms = {"g_adversarial": g_adversarial_loss(fake_out.real_prob)}
    if fake_out.style_probs is not None:
        terms["style_ambiguity"] = style_ambiguity_loss(fake_out.style_probs)
    return terms
