"""Training objectives: least-squares adversarial terms, the patch-level
contrastive loss with internal negatives, its multi-layer aggregate, the
identity variant, and the weighted total."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .models import FeatureStack, Generator, ProjectionHeads
from .patches import LocationSet, gather, sample_locations


@dataclass(frozen=True)
class NCEConfig:
    temperature: float = 0.07
    num_locations: int = 256

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.num_locations < 1:
            raise ValueError("num_locations must be >= 1")


@dataclass(frozen=True)
class LossWeights:
    nce: float = 0.5  # lambda: contrastive term on the source domain
    identity: float = 0.5  # mu: identity term on the target domain

    def __post_init__(self):
        if self.nce < 0 or self.identity < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass
class LossReport:
    gan_g: float
    gan_d: float
    nce_x: float
    nce_idt: float
    total: float

    def as_dict(self) -> dict:
        return {
            "gan_g": self.gan_g,
            "gan_d": self.gan_d,
            "nce_x": self.nce_x,
            "nce_idt": self.nce_idt,
            "total": self.total,
        }


def adversarial_losses(
    real_scores: torch.Tensor, fake_scores: torch.Tensor, mode: str = "lsgan"
) -> tuple[torch.Tensor, torch.Tensor]:
    """(d_loss, g_loss) for a patch score map.

    lsgan: d = 0.5*mean((real-1)^2) + 0.5*mean(fake^2), g = mean((fake-1)^2).
    The log (non-saturating) form is available behind mode="logistic".
    """
    if real_scores.shape != fake_scores.shape:
        raise ValueError(
            f"score shapes differ: {tuple(real_scores.shape)} vs {tuple(fake_scores.shape)}"
        )
    if mode == "lsgan":
        d_loss = 0.5 * ((real_scores - 1.0) ** 2).mean() + 0.5 * (fake_scores**2).mean()
        g_loss = ((fake_scores - 1.0) ** 2).mean()
    elif mode == "logistic":
        ones = torch.ones_like(real_scores)
        zeros = torch.zeros_like(fake_scores)
        d_loss = 0.5 * (
            F.binary_cross_entropy_with_logits(real_scores, ones)
            + F.binary_cross_entropy_with_logits(fake_scores, zeros)
        )
        g_loss = F.binary_cross_entropy_with_logits(fake_scores, ones)
    else:
        raise ValueError(f"unknown GAN mode {mode!r}")
    return d_loss, g_loss


def patch_nce(
    queries: torch.Tensor,
    keys: torch.Tensor,
    temperature: float,
    reduction: str = "mean",
) -> torch.Tensor:
    """Contrastive loss over locations (mean, or per-location with
    reduction="none").

    queries/keys are (n, M) or (B, n, M); key i is query i's positive and the
    other n-1 keys of the same item are its negatives.
    """
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    if queries.shape != keys.shape:
        raise ValueError(
            f"query/key shapes differ: {tuple(queries.shape)} vs {tuple(keys.shape)}"
        )
    if queries.dim() == 2:
        queries, keys = queries.unsqueeze(0), keys.unsqueeze(0)
    n = queries.shape[1]
    if n < 2:
        raise ValueError("need at least 2 locations (1 positive + 1 negative)")
    logits = torch.bmm(queries, keys.transpose(1, 2)) / temperature
    target = torch.arange(n, device=queries.device).expand(queries.shape[0], n)
    return F.cross_entropy(logits.reshape(-1, n), target.reshape(-1), reduction=reduction)


def multilayer_nce(
    source_stack: FeatureStack,
    generated_stack: FeatureStack,
    heads: ProjectionHeads,
    locations: LocationSet,
    cfg: NCEConfig,
    detach_keys: bool = True,
) -> torch.Tensor:
    """Sum over tap layers of the location-mean patch loss; queries come from
    the generated stack, positives/negatives from the source stack."""
    if len(source_stack.maps) != len(generated_stack.maps):
        raise ValueError("stacks have different layer counts")
    key_vecs = heads(gather(source_stack, locations))
    query_vecs = heads(gather(generated_stack, locations))
    total = None
    for q, k in zip(query_vecs, key_vecs):
        if detach_keys:
            k = k.detach()
        term = patch_nce(q, k, cfg.temperature)
        total = term if total is None else total + term
    return total


def identity_nce(
    generator: Generator,
    heads: ProjectionHeads,
    target_image: torch.Tensor,
    audio_embedding: torch.Tensor,
    rng: np.random.Generator,
    cfg: NCEConfig,
) -> torch.Tensor:
    """Contrastive loss between a target-domain image and its own
    reconstruction under its paired audio."""
    stack_y = generator.encode(target_image)
    y_idt = generator.decode(stack_y, audio_embedding)
    stack_idt = generator.encode(y_idt)
    locs = sample_locations(stack_y.shapes(), cfg.num_locations, rng)
    return multilayer_nce(stack_y, stack_idt, heads, locs, cfg)


def total_generator_loss(parts: LossReport, weights: LossWeights) -> float:
    """gan_g + lambda*nce_x + mu*nce_idt; refuses non-finite inputs."""
    vals = [parts.gan_g, parts.nce_x, parts.nce_idt]
    if not all(np.isfinite(v) for v in vals):
        raise FloatingPointError(f"non-finite loss parts: {parts.as_dict()}")
    return parts.gan_g + weights.nce * parts.nce_x + weights.identity * parts.nce_idt
