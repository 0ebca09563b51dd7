"""Composite model graphs: the reuse-based variants and the vanilla baseline.

Variant tags follow the training config surface:

    vanilla   reconstructive net + U-Net segmenter on concat(input, reconstruction)
    base      contrast modules feeding the aggregation head directly
    base+hsg  adds top-down semantic guidance
    base+mss  adds per-scale supervision heads (training only)
    full      adds both
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .discriminative import AggregationHead, FeatureContrast, SemanticGuidance, SupervisionHeads
from .reconstructive import DEFAULT_INPUT_SIZE, DEFAULT_WIDTHS, ReconstructiveNet, conv_block

VARIANTS = ("vanilla", "base", "base+hsg", "base+mss", "full")


@dataclass
class ModelOutput:
    """Per-batch outputs: reconstruction, anomaly heatmap, optional side heatmaps.

    `heatmap` is the B x H x W anomaly probability; `side_heatmaps` holds the
    per-scale two-channel softmax maps and is populated only when the
    supervision heads exist and the model is in training mode.
    """

    reconstruction: torch.Tensor
    heatmap: torch.Tensor
    side_heatmaps: list[torch.Tensor] | None = None


class PoutaModel(nn.Module):
    """Reconstructive net whose pyramids feed the coarse-to-fine segmentation head."""

    def __init__(
        self,
        use_hsg: bool = True,
        use_mss: bool = True,
        in_channels: int = 3,
        widths: tuple[int, ...] = DEFAULT_WIDTHS,
        input_size: int = DEFAULT_INPUT_SIZE,
    ) -> None:
        super().__init__()
        self.use_hsg = use_hsg
        self.use_mss = use_mss
        self.input_size = input_size
        self.reconstructive = ReconstructiveNet(in_channels, widths, input_size)
        self.contrast = nn.ModuleList(FeatureContrast(w) for w in widths)
        if use_hsg:
            self.guidance = nn.ModuleList(
                SemanticGuidance(guide_channels=widths[i + 1], channels=widths[i]) for i in range(3)
            )
        else:
            self.guidance = None
        self.supervision = SupervisionHeads(widths, input_size) if use_mss else None
        self.aggregate = AggregationHead(widths)

    def contrast_levels(
        self, encoder_features: list[torch.Tensor], decoder_features: list[torch.Tensor]
    ) -> list[torch.Tensor]:
        """Per-level contrast maps, refined top-down when guidance is enabled."""
        contrast = [
            module(enc, dec) for module, enc, dec in zip(self.contrast, encoder_features, decoder_features)
        ]
        if self.guidance is None:
            return contrast
        refined3, _ = self.guidance[2](contrast[2], contrast[3])
        refined2, _ = self.guidance[1](contrast[1], refined3)
        refined1, _ = self.guidance[0](contrast[0], refined2)
        return [refined1, refined2, refined3, contrast[3]]

    def forward(self, images: torch.Tensor) -> ModelOutput:
        rec = self.reconstructive(images)
        levels = self.contrast_levels(rec.encoder_features, rec.decoder_features)
        prediction = self.aggregate(levels)
        side = None
        if self.supervision is not None and self.training:
            side = self.supervision(levels)
        return ModelOutput(rec.reconstruction, prediction[:, 1], side)


class UNetSegmenter(nn.Module):
    """U-Net style segmenter the vanilla baseline runs on image-space errors."""

    def __init__(self, in_channels: int = 6, base_width: int = 64) -> None:
        super().__init__()
        b = base_width
        self.enc1 = nn.Sequential(conv_block(in_channels, b), conv_block(b, b))
        self.enc2 = nn.Sequential(conv_block(b, 2 * b, stride=2), conv_block(2 * b, 2 * b))
        self.enc3 = nn.Sequential(conv_block(2 * b, 4 * b, stride=2), conv_block(4 * b, 4 * b))
        self.enc4 = nn.Sequential(conv_block(4 * b, 8 * b, stride=2), conv_block(8 * b, 8 * b))
        self.bottleneck = nn.Sequential(conv_block(8 * b, 8 * b, stride=2), conv_block(8 * b, 8 * b))
        self.dec4 = nn.Sequential(conv_block(16 * b, 4 * b), conv_block(4 * b, 4 * b))
        self.dec3 = nn.Sequential(conv_block(8 * b, 2 * b), conv_block(2 * b, 2 * b))
        self.dec2 = nn.Sequential(conv_block(4 * b, b), conv_block(b, b))
        self.dec1 = nn.Sequential(conv_block(2 * b, b), conv_block(b, b))
        self.output = nn.Conv2d(b, 2, kernel_size=1)

    @staticmethod
    def _up(x: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
        return F.interpolate(x, size=like.shape[-2:], mode="bilinear", align_corners=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        e1 = self.enc1(x)
        e2 = self.enc2(e1)
        e3 = self.enc3(e2)
        e4 = self.enc4(e3)
        bottom = self.bottleneck(e4)
        d4 = self.dec4(torch.cat([self._up(bottom, e4), e4], dim=1))
        d3 = self.dec3(torch.cat([self._up(d4, e3), e3], dim=1))
        d2 = self.dec2(torch.cat([self._up(d3, e2), e2], dim=1))
        d1 = self.dec1(torch.cat([self._up(d2, e1), e1], dim=1))
        return torch.softmax(self.output(d1), dim=1)


class VanillaModel(nn.Module):
    """Baseline: the segmenter sees only the concatenation of input and reconstruction."""

    def __init__(
        self,
        in_channels: int = 3,
        widths: tuple[int, ...] = DEFAULT_WIDTHS,
        input_size: int = DEFAULT_INPUT_SIZE,
    ) -> None:
        super().__init__()
        self.input_size = input_size
        self.reconstructive = ReconstructiveNet(in_channels, widths, input_size)
        self.segmenter = UNetSegmenter(in_channels=2 * in_channels, base_width=widths[0])

    def forward(self, images: torch.Tensor) -> ModelOutput:
        rec = self.reconstructive(images)
        prediction = self.segmenter(torch.cat([images, rec.reconstruction], dim=1))
        return ModelOutput(rec.reconstruction, prediction[:, 1], None)


def build_model(
    variant: str,
    in_channels: int = 3,
    widths: tuple[int, ...] = DEFAULT_WIDTHS,
    input_size: int = DEFAULT_INPUT_SIZE,
) -> nn.Module:
    """Instantiate the model graph for a variant tag."""
    if variant == "vanilla":
        return VanillaModel(in_channels, widths, input_size)
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    return PoutaModel(
        use_hsg=variant in ("base+hsg", "full"),
        use_mss=variant in ("base+mss", "full"),
        in_channels=in_channels,
        widths=widths,
        input_size=input_size,
    )


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
