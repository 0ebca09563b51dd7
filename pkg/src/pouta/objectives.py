"""Loss terms for joint training of the reconstructive and segmentation networks.

All segmentation losses operate on the anomaly-channel probability map and a
binary target mask, averaged over pixels and batch so the per-scale weights
stay resolution-independent.  Predictions are epsilon-clamped before the log
so saturated outputs cannot produce NaNs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

PROB_EPS = 1e-7

DEFAULT_SCALE_WEIGHTS = (0.4, 0.3, 0.2, 0.1)


@dataclass(frozen=True)
class LossWeights:
    """Per-scale weights (finest head first) and focal-loss parameters."""

    scale_weights: tuple[float, float, float, float] = DEFAULT_SCALE_WEIGHTS
    focal_gamma: float = 2.0
    focal_alpha: float = 1.0

    def __post_init__(self) -> None:
        if len(self.scale_weights) != 4 or any(w < 0 for w in self.scale_weights):
            raise ValueError(f"scale weights must be 4 non-negative reals, got {self.scale_weights}")
        if self.focal_gamma < 0:
            raise ValueError(f"focal gamma must be non-negative, got {self.focal_gamma}")


def _check_pair(prediction: torch.Tensor, target: torch.Tensor) -> None:
    if prediction.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(prediction.shape)} vs {tuple(target.shape)}")


def focal_loss(
    prediction: torch.Tensor,
    target: torch.Tensor,
    gamma: float = 2.0,
    alpha: float = 1.0,
) -> torch.Tensor:
    """Mean of -alpha * (1 - p_t)**gamma * log(p_t) over all pixels.

    `p_t` is the predicted probability of the true class: the prediction
    where the target is foreground, its complement elsewhere.
    """
    _check_pair(prediction, target)
    if not torch.isfinite(prediction).all() or not torch.isfinite(target).all():
        raise FloatingPointError("focal loss received NaN or Inf inputs")
    p = prediction.clamp(PROB_EPS, 1.0 - PROB_EPS)
    p_t = torch.where(target > 0.5, p, 1.0 - p)
    return (-alpha * (1.0 - p_t) ** gamma * torch.log(p_t)).mean()


def l1_loss(prediction: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference."""
    _check_pair(prediction, target)
    return (prediction - target).abs().mean()


def supervision_loss(
    prediction: torch.Tensor,
    target: torch.Tensor,
    weights: LossWeights = LossWeights(),
) -> torch.Tensor:
    """Per-head segmentation loss: focal plus L1 on the same prediction."""
    return focal_loss(prediction, target, weights.focal_gamma, weights.focal_alpha) + l1_loss(prediction, target)


def multiscale_loss(
    per_scale_losses: list[torch.Tensor] | tuple[torch.Tensor, ...],
    weights: LossWeights = LossWeights(),
) -> torch.Tensor:
    """Weighted sum of the per-scale supervision losses, finest scale first."""
    if len(per_scale_losses) != len(weights.scale_weights):
        raise ValueError(f"expected {len(weights.scale_weights)} loss terms, got {len(per_scale_losses)}")
    total = per_scale_losses[0] * weights.scale_weights[0]
    for term, w in zip(per_scale_losses[1:], weights.scale_weights[1:]):
        total = total + term * w
    return total


def total_loss(
    reconstruction_term: torch.Tensor,
    prediction_term: torch.Tensor,
    multiscale_term: torch.Tensor | float = 0.0,
) -> torch.Tensor:
    """Joint objective: plain sum, so gradients reach all three sub-networks.

    Variants without per-scale supervision pass 0 for the multiscale term,
    which is the same expression with all scale weights at zero.
    """
    return reconstruction_term + prediction_term + multiscale_term
