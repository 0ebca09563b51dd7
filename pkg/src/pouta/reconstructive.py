"""Reconstructive network: encoder / latent-mapping / decoder with symmetric pyramids.

The encoder emits a 4-level feature pyramid (strides 2, 4, 8, 16), the mapping
stage re-projects the deepest level into the normal latent space, and the
decoder mirrors the encoder back up to a sigmoid-bounded reconstruction.  The
decoder's per-level spatial sizes match the encoder's level-for-level, which
is what the downstream segmentation head relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

DEFAULT_WIDTHS = (64, 128, 256, 512)
DEFAULT_INPUT_SIZE = 224


def conv_block(in_channels: int, out_channels: int, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, kernel_size=3, stride=stride, padding=1, bias=False),
        nn.BatchNorm2d(out_channels),
        nn.ReLU(inplace=True),
    )


class Encoder(nn.Module):
    """Four stages, each downsampling by 2 at entry; widths per DEFAULT_WIDTHS."""

    def __init__(self, in_channels: int = 3, widths: tuple[int, ...] = DEFAULT_WIDTHS) -> None:
        super().__init__()
        stages = []
        prev = in_channels
        for width in widths:
            stages.append(nn.Sequential(conv_block(prev, width, stride=2), conv_block(width, width)))
            prev = width
        self.stages = nn.ModuleList(stages)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        features = []
        for stage in self.stages:
            x = stage(x)
            features.append(x)
        return features


class LatentMapper(nn.Module):
    """Maps the deepest encoder level into the normal latent space (same shape)."""

    def __init__(self, channels: int) -> None:
        super().__init__()
        self.body = nn.Sequential(conv_block(channels, channels), conv_block(channels, channels))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


class Decoder(nn.Module):
    """Mirror of the encoder: bilinear 2x upsampling plus two conv blocks per stage."""

    def __init__(self, out_channels: int = 3, widths: tuple[int, ...] = DEFAULT_WIDTHS) -> None:
        super().__init__()
        w1, w2, w3, w4 = widths
        self.level4 = nn.Sequential(conv_block(w4, w4), conv_block(w4, w4))
        self.level3 = nn.Sequential(conv_block(w4, w3), conv_block(w3, w3))
        self.level2 = nn.Sequential(conv_block(w3, w2), conv_block(w2, w2))
        self.level1 = nn.Sequential(conv_block(w2, w1), conv_block(w1, w1))
        self.output = nn.Conv2d(w1, out_channels, kernel_size=3, padding=1)

    @staticmethod
    def _up(x: torch.Tensor, size: tuple[int, int] | None) -> torch.Tensor:
        if size is None:
            return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        return F.interpolate(x, size=size, mode="bilinear", align_corners=False)

    def forward(
        self,
        latent: torch.Tensor,
        level_sizes: tuple[tuple[int, int], ...] | None = None,
        output_size: tuple[int, int] | None = None,
    ) -> tuple[list[torch.Tensor], torch.Tensor]:
        """Returns the decoder pyramid (finest first) and the reconstruction.

        `level_sizes` gives the target spatial size per level (finest first);
        without it every step upsamples by exactly 2, which matches the
        production ladder for inputs whose side is a multiple of 16.
        """
        sizes = level_sizes if level_sizes is not None else (None, None, None)
        f4 = self.level4(latent)
        f3 = self.level3(self._up(f4, sizes[2]))
        f2 = self.level2(self._up(f3, sizes[1]))
        f1 = self.level1(self._up(f2, sizes[0]))
        reconstruction = torch.sigmoid(self.output(self._up(f1, output_size)))
        return [f1, f2, f3, f4], reconstruction


@dataclass
class ReconstructiveOutput:
    encoder_features: list[torch.Tensor]
    latent: torch.Tensor
    decoder_features: list[torch.Tensor]
    reconstruction: torch.Tensor


class ReconstructiveNet(nn.Module):
    """Encoder, mapping and decoder wired together with aligned pyramids."""

    def __init__(
        self,
        in_channels: int = 3,
        widths: tuple[int, ...] = DEFAULT_WIDTHS,
        input_size: int = DEFAULT_INPUT_SIZE,
    ) -> None:
        super().__init__()
        if len(widths) != 4:
            raise ValueError(f"expected 4 pyramid widths, got {widths}")
        self.in_channels = in_channels
        self.widths = tuple(widths)
        self.input_size = input_size
        self.encoder = Encoder(in_channels, self.widths)
        self.mapper = LatentMapper(self.widths[-1])
        self.decoder = Decoder(in_channels, self.widths)

    def encode(self, images: torch.Tensor) -> list[torch.Tensor]:
        if images.ndim != 4 or images.shape[1] != self.in_channels:
            raise ValueError(f"expected B x {self.in_channels} x H x W input, got {tuple(images.shape)}")
        if images.shape[-2:] != (self.input_size, self.input_size):
            raise ValueError(
                f"expected {self.input_size}x{self.input_size} input, got "
                f"{images.shape[-2]}x{images.shape[-1]}; resize in the loader first"
            )
        return self.encoder(images)

    def map_latent(self, deepest: torch.Tensor) -> torch.Tensor:
        return self.mapper(deepest)

    def decode(self, latent: torch.Tensor) -> tuple[list[torch.Tensor], torch.Tensor]:
        return self.decoder(latent)

    def forward(self, images: torch.Tensor) -> ReconstructiveOutput:
        encoder_features = self.encode(images)
        latent = self.map_latent(encoder_features[-1])
        level_sizes = tuple(f.shape[-2:] for f in encoder_features)
        decoder_features, reconstruction = self.decoder(latent, level_sizes, images.shape[-2:])
        return ReconstructiveOutput(encoder_features, latent, decoder_features, reconstruction)


def _gaussian_window(window_size: int, sigma: float, device, dtype) -> torch.Tensor:
    coords = torch.arange(window_size, device=device, dtype=dtype) - (window_size - 1) / 2
    g = torch.exp(-(coords**2) / (2 * sigma**2))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim(
    a: torch.Tensor,
    b: torch.Tensor,
    window_size: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
    data_range: float = 1.0,
) -> torch.Tensor:
    """Mean structural similarity over a Gaussian window (same-padded)."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    if min(a.shape[-2:]) < window_size:
        raise ValueError(f"window {window_size} exceeds image size {tuple(a.shape[-2:])}")
    channels = a.shape[1]
    window = _gaussian_window(window_size, sigma, a.device, a.dtype)
    window = window.expand(channels, 1, window_size, window_size).contiguous()
    pad = window_size // 2

    def filt(x):
        return F.conv2d(x, window, padding=pad, groups=channels)

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b

    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    ssim_map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
    return ssim_map.mean()


def reconstruction_loss(reconstructed: torch.Tensor, original: torch.Tensor, window_size: int = 11) -> torch.Tensor:
    """MSE plus structural-dissimilarity term; zero iff the images are identical."""
    if reconstructed.shape != original.shape:
        raise ValueError(f"shape mismatch: {tuple(reconstructed.shape)} vs {tuple(original.shape)}")
    mse = F.mse_loss(reconstructed, original)
    return mse + (1.0 - ssim(reconstructed, original, window_size=window_size))
