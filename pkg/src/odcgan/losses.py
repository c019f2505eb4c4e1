"""Adversarial objectives for the generator and the discriminator.

Every term is a mean over batch and spatial positions, so the L1 weight does
not depend on batch size. Scores are clamped to ``[eps, 1 - eps]`` before
taking logs.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass
class LossConfig:
    lambda_l1: float = 100.0
    log_epsilon: float = 1e-7

    def validate(self) -> None:
        if not self.lambda_l1 >= 0:
            raise ValueError(f"lambda_l1 must be non-negative, got {self.lambda_l1}")
        if not 0 < self.log_epsilon < 1e-3:
            raise ValueError(f"log_epsilon must lie in (0, 1e-3), got {self.log_epsilon}")


@dataclass
class GeneratorLoss:
    total: torch.Tensor
    adversarial: torch.Tensor
    l1: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        return {"total": self.total.item(), "adv": self.adversarial.item(), "l1": self.l1.item()}


@dataclass
class DiscriminatorLoss:
    total: torch.Tensor
    real: torch.Tensor
    fake: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        return {"total": self.total.item(), "real": self.real.item(), "fake": self.fake.item()}


def _neg_log(p: torch.Tensor, eps: float) -> torch.Tensor:
    return -torch.log(p.clamp(eps, 1.0 - eps))


def generator_loss(scores_fake, pred, gt, cfg: LossConfig | None = None) -> GeneratorLoss:
    """``mean(-log D(x, G(x))) + lambda * mean(|gt - G(x)|)``.

    ``l1`` holds the unweighted mean absolute error; ``total`` already
    includes the ``lambda`` factor.
    """
    cfg = cfg or LossConfig()
    cfg.validate()
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {tuple(pred.shape)} and target {tuple(gt.shape)} differ")
    if scores_fake.shape[0] != pred.shape[0]:
        raise ValueError("score map and prediction have different batch sizes")
    adv = _neg_log(scores_fake, cfg.log_epsilon).mean()
    l1 = (gt - pred).abs().mean()
    return GeneratorLoss(adv + cfg.lambda_l1 * l1, adv, l1)


def discriminator_loss(scores_real, scores_fake, cfg: LossConfig | None = None) -> DiscriminatorLoss:
    """``mean(-log D(x, y)) + mean(-log(1 - D(x, G(x))))``."""
    cfg = cfg or LossConfig()
    cfg.validate()
    if scores_real.shape != scores_fake.shape:
        raise ValueError(
            f"real {tuple(scores_real.shape)} and fake {tuple(scores_fake.shape)} score maps differ"
        )
    real = _neg_log(scores_real, cfg.log_epsilon).mean()
    fake = _neg_log(1.0 - scores_fake, cfg.log_epsilon).mean()
    return DiscriminatorLoss(real + fake, real, fake)
