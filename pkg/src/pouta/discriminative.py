"""Coarse-to-fine segmentation head operating on reused reconstructive pyramids.

Per level, a contrast module compares the symmetric encoder/decoder features.
The three finest contrast maps are then refined top-down with spatial and
channel weights derived from the next-coarser level, auxiliary per-scale
heads supervise every level during training, and an aggregation head fuses
all levels into the final anomaly heatmap.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .reconstructive import conv_block


class FeatureContrast(nn.Module):
    """Contrasts one encoder level against its symmetric decoder level.

    Each branch passes through its own 1x1 projection; the concatenation is
    fused by a third 1x1 convolution whose output keeps the level's width.
    """

    def __init__(self, channels: int) -> None:
        super().__init__()
        self.encoder_proj = nn.Sequential(
            nn.Conv2d(channels, channels, kernel_size=1, bias=False),
            nn.BatchNorm2d(channels),
            nn.ReLU(inplace=True),
        )
        self.decoder_proj = nn.Sequential(
            nn.Conv2d(channels, channels, kernel_size=1, bias=False),
            nn.BatchNorm2d(channels),
            nn.ReLU(inplace=True),
        )
        self.fuse = nn.Sequential(
            nn.Conv2d(2 * channels, channels, kernel_size=1, bias=False),
            nn.BatchNorm2d(channels),
            nn.ReLU(inplace=True),
        )

    def forward(self, encoder_level: torch.Tensor, decoder_level: torch.Tensor) -> torch.Tensor:
        if encoder_level.shape != decoder_level.shape:
            raise ValueError(
                f"symmetric levels must match: {tuple(encoder_level.shape)} vs {tuple(decoder_level.shape)}"
            )
        merged = torch.cat([self.encoder_proj(encoder_level), self.decoder_proj(decoder_level)], dim=1)
        return self.fuse(merged)


def apply_guidance(
    features: torch.Tensor,
    spatial_weight: torch.Tensor,
    channel_weight: torch.Tensor,
) -> torch.Tensor:
    """Broadcast product spatial_weight * features * channel_weight.

    `spatial_weight` is B x 1 x H x W, `channel_weight` is B x C x 1 x 1; unit
    weights leave the features unchanged.
    """
    b, c, h, w = features.shape
    if spatial_weight.shape != (b, 1, h, w):
        raise ValueError(f"spatial weight must be {(b, 1, h, w)}, got {tuple(spatial_weight.shape)}")
    if channel_weight.shape != (b, c, 1, 1):
        raise ValueError(f"channel weight must be {(b, c, 1, 1)}, got {tuple(channel_weight.shape)}")
    return spatial_weight * features * channel_weight


class SemanticGuidance(nn.Module):
    """Refines one contrast level with weights derived from the next-coarser level.

    The coarser (guidance) features are upsampled to the current resolution
    and passed through a shared 3x3 convolution; a 1x1 convolution then
    produces the single-channel spatial weight map, while global average
    pooling followed by a 1x1 convolution produces the per-channel weights.
    Both weight maps are sigmoid-bounded to [0, 1].
    """

    def __init__(self, guide_channels: int, channels: int) -> None:
        super().__init__()
        self.refine = conv_block(guide_channels, channels)
        self.spatial_head = nn.Conv2d(channels, 1, kernel_size=1)
        self.channel_head = nn.Conv2d(channels, channels, kernel_size=1)

    def compute_weights(
        self, guidance: torch.Tensor, size: tuple[int, int]
    ) -> tuple[torch.Tensor, torch.Tensor]:
        g = F.interpolate(guidance, size=size, mode="bilinear", align_corners=False)
        g = self.refine(g)
        spatial = torch.sigmoid(self.spatial_head(g))
        channel = torch.sigmoid(self.channel_head(g.mean(dim=(2, 3), keepdim=True)))
        return spatial, channel

    def forward(
        self, current: torch.Tensor, guidance: torch.Tensor
    ) -> tuple[torch.Tensor, tuple[torch.Tensor, torch.Tensor]]:
        if guidance.shape[-2] >= current.shape[-2] or guidance.shape[-1] >= current.shape[-1]:
            raise ValueError(
                f"guidance level {tuple(guidance.shape[-2:])} must be coarser than "
                f"the level being refined {tuple(current.shape[-2:])}"
            )
        spatial, channel = self.compute_weights(guidance, current.shape[-2:])
        return apply_guidance(current, spatial, channel), (spatial, channel)


class SupervisionHeads(nn.Module):
    """Per-scale predictive heads used only while training.

    Each head upsamples its level to the image resolution, reduces it to two
    channels with a 1x1 convolution and applies a softmax; channel 1 is the
    anomaly probability.  Calling these heads in eval mode is a contract
    violation: they contribute loss terms, never predictions.
    """

    def __init__(self, widths: tuple[int, ...], output_size: int) -> None:
        super().__init__()
        self.output_size = output_size
        self.heads = nn.ModuleList(nn.Conv2d(w, 2, kernel_size=1) for w in widths)

    def forward(self, levels: list[torch.Tensor]) -> list[torch.Tensor]:
        if not self.training:
            raise RuntimeError("supervision heads are train-only; eval-mode predictions must not use them")
        if len(levels) != len(self.heads):
            raise ValueError(f"expected {len(self.heads)} levels, got {len(levels)}")
        outputs = []
        for level, head in zip(levels, self.heads):
            up = F.interpolate(level, size=(self.output_size, self.output_size), mode="bilinear", align_corners=False)
            outputs.append(torch.softmax(head(up), dim=1))
        return outputs


class AggregationHead(nn.Module):
    """Fuses all levels into the final two-channel softmax heatmap.

    Levels are bilinearly upsampled to the finest level's resolution,
    channel-concatenated, fused by one 3x3 conv block, upsampled 2x to the
    image resolution and classified by a 1x1 convolution.
    """

    def __init__(self, widths: tuple[int, ...], fuse_channels: int | None = None) -> None:
        super().__init__()
        fuse_channels = fuse_channels or widths[0]
        self.fuse = conv_block(sum(widths), fuse_channels)
        self.classify = nn.Conv2d(fuse_channels, 2, kernel_size=1)

    def forward(self, levels: list[torch.Tensor]) -> torch.Tensor:
        target = levels[0].shape[-2:]
        stacked = torch.cat(
            [levels[0]]
            + [F.interpolate(lvl, size=target, mode="bilinear", align_corners=False) for lvl in levels[1:]],
            dim=1,
        )
        fused = self.fuse(stacked)
        fused = F.interpolate(fused, scale_factor=2, mode="bilinear", align_corners=False)
        return torch.softmax(self.classify(fused), dim=1)
