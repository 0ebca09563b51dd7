"""Procedural desk-scale dataset for smoke training and demos.

Builds a tiny MVTec-convention tree of striped images (category "stripes"):
normal images are smooth diagonal stripes with per-image phase and brightness
jitter; anomalous test images blend a checkerboard texture into a
gradient-noise mask region using the package's own synthesizer, with the
blended region saved as ground truth.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import save_image_png, save_mask_png
from .synthesis import generate_perlin_mask, synthesize_anomaly

CATEGORY = "stripes"


def stripe_image(size: int, rng: np.random.Generator) -> np.ndarray:
    """One normal sample: soft diagonal stripes with mild jitter."""
    phase = rng.uniform(0.0, 2.0 * np.pi)
    period = 12.0 + rng.uniform(-1.0, 1.0)
    brightness = rng.uniform(-0.05, 0.05)
    ys, xs = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    wave = 0.5 + 0.35 * np.sin(2.0 * np.pi * (xs + 0.5 * ys) / period + phase)
    image = np.stack([wave, wave * 0.9 + 0.05, wave * 0.8 + 0.1], axis=-1) + brightness
    return np.clip(image, 0.0, 1.0).astype(np.float32)


def checker_texture(size: int, rng: np.random.Generator, cell: int = 4) -> np.ndarray:
    """Anomaly source: high-contrast checkerboard with a random color tint."""
    ys, xs = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    board = (((ys // cell) + (xs // cell)) % 2).astype(np.float32)
    board = 0.1 + 0.8 * board
    tint = rng.uniform(0.6, 1.0, size=3).astype(np.float32)
    return np.clip(board[..., None] * tint, 0.0, 1.0).astype(np.float32)


def _nonempty_mask(size: int, rng: np.random.Generator) -> np.ndarray:
    for _ in range(32):
        mask = generate_perlin_mask(size, size, frequency_range=(1, 3), seed=int(rng.integers(2**31)))
        if mask.mean() > 0.02:
            return mask
    raise RuntimeError("could not draw a non-empty fixture mask")


def make_texture_dir(root: Path | str, count: int = 4, size: int = 64, seed: int = 0) -> Path:
    """Write a small directory of checkerboard textures for --texture-dir."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(count):
        save_image_png(checker_texture(size, rng), root / f"texture_{i:03d}.png")
    return root


def make_toy_dataset(
    root: Path | str,
    n_train: int = 32,
    n_test: int = 16,
    image_size: int = 64,
    seed: int = 0,
) -> Path:
    """Build the fixture tree under `root`; returns the dataset root.

    The test split is half normal, half anomalous.  Anomalies use opacity in
    [0.15, 0.5] so every defect stays clearly visible.
    """
    root = Path(root)
    category_dir = root / CATEGORY
    rng = np.random.default_rng(seed)

    for i in range(n_train):
        save_image_png(stripe_image(image_size, rng), category_dir / "train" / "good" / f"{i:03d}.png")

    n_good = n_test // 2
    for i in range(n_good):
        save_image_png(stripe_image(image_size, rng), category_dir / "test" / "good" / f"{i:03d}.png")

    for i in range(n_test - n_good):
        original = stripe_image(image_size, rng)
        mask = _nonempty_mask(image_size, rng)
        texture = checker_texture(image_size, rng)
        opacity = float(rng.uniform(0.15, 0.5))
        defect = synthesize_anomaly(original, texture, mask, opacity)
        save_image_png(defect, category_dir / "test" / "blotch" / f"{i:03d}.png")
        save_mask_png(mask, category_dir / "ground_truth" / "blotch" / f"{i:03d}_mask.png")
    return root
