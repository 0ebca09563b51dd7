"""Self-supervised training-pair synthesis.

Anomalous inputs are produced by blending an augmented texture into a
gradient-noise mask region of a defect-free image:

    blended = (1 - M) * original + M * (beta * original + (1 - beta) * augmented)

All functions are pure and fully determined by their arguments plus an
explicit seed, so they are safe to call from parallel data-loading workers.
Per-sample seeds should come from :func:`derive_sample_seed` so that worker
scheduling never changes the generated data.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np
from scipy import ndimage

from .data import load_image

TRANSFORMS = ("identity", "translation", "rotation")

MIN_MASK_SIZE = 16
MAX_FREQUENCY_EXPONENT = 6
OPACITY_RANGE = (0.15, 1.0)


def derive_sample_seed(global_seed: int, epoch: int, index: int) -> int:
    """Stable per-sample seed so parallel loading stays order-independent."""
    return int(np.random.SeedSequence([global_seed, epoch, index]).generate_state(1)[0])


def _fade(t: np.ndarray) -> np.ndarray:
    return 6 * t**5 - 15 * t**4 + 10 * t**3


def _gradient_noise(size: int, res_y: int, res_x: int, rng: np.random.Generator) -> np.ndarray:
    """Classic lattice-gradient noise on a size x size grid, size divisible by res."""
    dy, dx = size // res_y, size // res_x
    ys, xs = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    grid = np.stack([(ys * res_y / size) % 1, (xs * res_x / size) % 1], axis=-1)

    angles = 2 * np.pi * rng.random((res_y + 1, res_x + 1))
    gradients = np.stack((np.cos(angles), np.sin(angles)), axis=-1)

    def corner(sy, sx, shift):
        g = gradients[sy[0] : sy[1], sx[0] : sx[1]]
        g = np.repeat(np.repeat(g, dy, axis=0), dx, axis=1)
        offset = np.stack([grid[..., 0] + shift[0], grid[..., 1] + shift[1]], axis=-1)
        return (offset * g).sum(axis=-1)

    n00 = corner((0, -1), (0, -1), (0, 0))
    n10 = corner((1, None), (0, -1), (-1, 0))
    n01 = corner((0, -1), (1, None), (0, -1))
    n11 = corner((1, None), (1, None), (-1, -1))

    t = _fade(grid)
    top = n00 + t[..., 1] * (n01 - n00)
    bottom = n10 + t[..., 1] * (n11 - n10)
    return np.sqrt(2.0) * (top + t[..., 0] * (bottom - top))


def generate_perlin_mask(
    height: int,
    width: int,
    frequency_range: tuple[int, int] = (0, 5),
    threshold: float = 0.5,
    seed: int = 0,
) -> np.ndarray:
    """Binary anomaly-region mask from thresholded, randomly rotated gradient noise.

    The per-axis lattice frequency is 2**k with k drawn uniformly from
    `frequency_range` (inclusive).  Deterministic for fixed arguments; the
    foreground may be empty, in which case callers needing a non-empty mask
    resample with a fresh seed.
    """
    if height < MIN_MASK_SIZE or width < MIN_MASK_SIZE:
        raise ValueError(f"mask size must be at least {MIN_MASK_SIZE}, got {height}x{width}")
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    lo, hi = frequency_range
    if not (0 <= lo <= hi <= MAX_FREQUENCY_EXPONENT):
        raise ValueError(f"frequency exponents must satisfy 0 <= lo <= hi <= 6, got {frequency_range}")

    size = 1 << int(np.ceil(np.log2(max(height, width))))
    max_exp = int(np.log2(size))

    rng = np.random.default_rng(seed)
    exp_y = min(int(rng.integers(lo, hi + 1)), max_exp)
    exp_x = min(int(rng.integers(lo, hi + 1)), max_exp)
    noise = _gradient_noise(size, 2**exp_y, 2**exp_x, rng)

    angle = float(rng.uniform(-90.0, 90.0))
    noise = ndimage.rotate(noise, angle, reshape=False, order=1, mode="reflect")

    return (noise[:height, :width] > threshold).astype(np.float32)


def _transform(image: np.ndarray, transform_id: str, rng: np.random.Generator) -> np.ndarray:
    if transform_id == "identity":
        return image
    if transform_id == "translation":
        h, w = image.shape[:2]
        shift_y = int(rng.integers(-h // 4, h // 4 + 1))
        shift_x = int(rng.integers(-w // 4, w // 4 + 1))
        return np.roll(image, (shift_y, shift_x), axis=(0, 1))
    if transform_id == "rotation":
        angle = float(rng.uniform(-90.0, 90.0))
        rotated = ndimage.rotate(image, angle, axes=(1, 0), reshape=False, order=1, mode="reflect")
        return np.clip(rotated, 0.0, 1.0).astype(np.float32)
    raise ValueError(f"unknown transform {transform_id!r}, expected one of {TRANSFORMS}")


def build_augmented_texture(
    original: np.ndarray,
    texture: np.ndarray,
    transform_id: str = "identity",
    mix: float = 0.5,
    seed: int = 0,
) -> np.ndarray:
    """Anomaly source image: mix * T(original) + (1 - mix) * texture, clamped to [0, 1].

    The texture is resized to the original's spatial size when needed.
    """
    if not 0.0 <= mix <= 1.0:
        raise ValueError(f"mix must lie in [0, 1], got {mix}")
    original = np.asarray(original, dtype=np.float32)
    texture = np.asarray(texture, dtype=np.float32)
    if texture.shape[:2] != original.shape[:2]:
        texture = cv2.resize(texture, (original.shape[1], original.shape[0]), interpolation=cv2.INTER_LINEAR)
    if texture.shape != original.shape:
        raise RuntimeError(f"texture shape {texture.shape} does not match image shape {original.shape} after resize")

    rng = np.random.default_rng(seed)
    transformed = _transform(original, transform_id, rng)
    mixed = np.float32(mix) * transformed + np.float32(1.0 - mix) * texture
    return np.clip(mixed, 0.0, 1.0)


def synthesize_anomaly(
    original: np.ndarray,
    augmented: np.ndarray,
    mask: np.ndarray,
    opacity: float,
) -> np.ndarray:
    """Blend `augmented` into the mask region of `original` at the given opacity.

    Outside the mask the output equals the original exactly; inside, the pixel
    is the convex combination opacity * original + (1 - opacity) * augmented.
    """
    original = np.asarray(original, dtype=np.float32)
    augmented = np.asarray(augmented, dtype=np.float32)
    mask = np.asarray(mask, dtype=np.float32)
    if augmented.shape != original.shape:
        raise ValueError(f"augmented shape {augmented.shape} != original shape {original.shape}")
    if mask.shape != original.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} != image spatial shape {original.shape[:2]}")
    lo, hi = OPACITY_RANGE
    if not lo <= opacity <= hi:
        raise ValueError(f"opacity must lie in [{lo}, {hi}], got {opacity}")

    m = mask[..., None] if original.ndim == 3 else mask
    beta = np.float32(opacity)
    blended = (np.float32(1.0) - m) * original + m * (beta * original + (np.float32(1.0) - beta) * augmented)
    return np.clip(blended, 0.0, 1.0)


@dataclass(frozen=True)
class SyntheticSample:
    """One training pair: the clean image, the blended input, and its mask."""

    original: np.ndarray
    image: np.ndarray
    mask: np.ndarray
    is_anomalous: bool
    opacity: float
    seed: int


class AnomalySynthesizer:
    """Draws synthetic training samples from defect-free images.

    A configurable fraction of samples is left untouched (empty mask) so the
    segmentation head sees the negative class.  Without a texture directory,
    the anomaly source falls back to a transformed copy of the original image.
    """

    def __init__(
        self,
        image_size: int,
        texture_paths: Sequence[Path | str] | None = None,
        normal_fraction: float = 0.5,
        opacity_range: tuple[float, float] = OPACITY_RANGE,
        transforms: Sequence[str] = TRANSFORMS,
        frequency_range: tuple[int, int] = (0, 5),
        mask_threshold: float = 0.5,
        max_mask_attempts: int = 8,
    ) -> None:
        if not 0.0 <= normal_fraction <= 1.0:
            raise ValueError(f"normal_fraction must lie in [0, 1], got {normal_fraction}")
        lo, hi = opacity_range
        if not OPACITY_RANGE[0] <= lo <= hi <= OPACITY_RANGE[1]:
            raise ValueError(f"opacity_range must lie within {OPACITY_RANGE}, got {opacity_range}")
        unknown = set(transforms) - set(TRANSFORMS)
        if unknown:
            raise ValueError(f"unknown transforms {sorted(unknown)}, expected subset of {TRANSFORMS}")
        self.image_size = image_size
        self.texture_paths = [Path(p) for p in texture_paths] if texture_paths else []
        self.normal_fraction = normal_fraction
        self.opacity_range = opacity_range
        self.transforms = tuple(transforms)
        self.frequency_range = frequency_range
        self.mask_threshold = mask_threshold
        self.max_mask_attempts = max_mask_attempts

    def _normal_sample(self, original: np.ndarray, seed: int) -> SyntheticSample:
        mask = np.zeros(original.shape[:2], dtype=np.float32)
        return SyntheticSample(original, original.copy(), mask, False, 1.0, seed)

    def sample(self, original: np.ndarray, seed: int) -> SyntheticSample:
        """Synthesize one training pair; fully determined by (original, seed)."""
        original = np.asarray(original, dtype=np.float32)
        h, w = original.shape[:2]
        rng = np.random.default_rng(seed)

        if rng.random() < self.normal_fraction:
            return self._normal_sample(original, seed)

        mask = np.zeros((h, w), dtype=np.float32)
        for _ in range(self.max_mask_attempts):
            mask = generate_perlin_mask(
                h, w, self.frequency_range, self.mask_threshold, seed=int(rng.integers(2**31))
            )
            if mask.any():
                break
        if not mask.any():
            return self._normal_sample(original, seed)

        if self.texture_paths:
            texture = load_image(self.texture_paths[int(rng.integers(len(self.texture_paths)))], self.image_size)
            mix = float(rng.uniform(0.0, 1.0))
        else:
            texture = original
            mix = 1.0
        transform_id = self.transforms[int(rng.integers(len(self.transforms)))]
        augmented = build_augmented_texture(original, texture, transform_id, mix, seed=int(rng.integers(2**31)))

        opacity = float(rng.uniform(*self.opacity_range))
        blended = synthesize_anomaly(original, augmented, mask, opacity)
        return SyntheticSample(original, blended, mask, True, opacity, seed)
