"""Dataset indexing and image IO.

Datasets follow the MVTec directory convention::

    <root>/<category>/train/good/*.png
    <root>/<category>/test/<defect_type>/*.png
    <root>/<category>/ground_truth/<defect_type>/*_mask.png

Images are decoded to float32 RGB arrays in [0, 1]; masks to float32 {0, 1}
arrays.  All listings are sorted lexicographically so indexes are
reproducible across runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")

LABEL_NORMAL = "normal"
LABEL_ANOMALOUS = "anomalous"


def list_images(directory: Path) -> list[Path]:
    """All image files directly under `directory`, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS)


def load_image(path: Path | str, size: int | None = None) -> np.ndarray:
    """Decode an image to float32 RGB in [0, 1], optionally resized to size x size.

    Grayscale files are promoted to 3 channels.  Raises OSError naming the
    path when the file is missing or cannot be decoded.
    """
    path = Path(path)
    raw = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if raw is None:
        raise OSError(f"cannot decode image: {path}")
    if size is not None and raw.shape[:2] != (size, size):
        raw = cv2.resize(raw, (size, size), interpolation=cv2.INTER_LINEAR)
    rgb = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    return rgb.astype(np.float32) / 255.0


def load_mask(path: Path | str, size: int | None = None) -> np.ndarray:
    """Decode a ground-truth mask to float32 {0, 1}, optionally resized (nearest)."""
    path = Path(path)
    raw = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if raw is None:
        raise OSError(f"cannot decode mask: {path}")
    if size is not None and raw.shape != (size, size):
        raw = cv2.resize(raw, (size, size), interpolation=cv2.INTER_NEAREST)
    return (raw > 127).astype(np.float32)


def save_image_png(image: np.ndarray, path: Path | str) -> None:
    """Write a float [0, 1] RGB (or single-channel) array as an 8-bit PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    u8 = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    if u8.ndim == 3:
        u8 = cv2.cvtColor(u8, cv2.COLOR_RGB2BGR)
    if not cv2.imwrite(str(path), u8):
        raise OSError(f"cannot write image: {path}")


def save_mask_png(mask: np.ndarray, path: Path | str) -> None:
    """Write a {0, 1} mask as an 8-bit PNG with foreground = 255."""
    save_image_png(np.asarray(mask, dtype=np.float32), path)


def render_heatmap(heatmap: np.ndarray, original: np.ndarray, out_stem: Path | str) -> tuple[Path, Path]:
    """Write `<stem>.png` (raw 8-bit grayscale heatmap, linear [0,1] -> [0,255])
    and `<stem>_overlay.png` (colormapped heatmap alpha-blended at 0.5 onto the
    original image).  Returns the two written paths.
    """
    heatmap = np.asarray(heatmap, dtype=np.float32)
    if heatmap.ndim != 2:
        raise ValueError(f"heatmap must be 2-D, got shape {heatmap.shape}")
    out_stem = Path(out_stem)
    raw_path = out_stem.with_suffix(".png")
    overlay_path = out_stem.with_name(out_stem.name + "_overlay.png")

    u8 = np.clip(np.rint(heatmap * 255.0), 0, 255).astype(np.uint8)
    raw_path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(raw_path), u8):
        raise OSError(f"cannot write heatmap: {raw_path}")

    colored = cv2.applyColorMap(u8, cv2.COLORMAP_JET)[..., ::-1].astype(np.float32) / 255.0
    if colored.shape[:2] != original.shape[:2]:
        colored = cv2.resize(colored, (original.shape[1], original.shape[0]))
    overlay = 0.5 * np.asarray(original, dtype=np.float32) + 0.5 * colored
    save_image_png(overlay, overlay_path)
    return raw_path, overlay_path


@dataclass(frozen=True)
class DatasetItem:
    """One indexed image with its optional ground-truth mask."""

    image_path: Path
    mask_path: Path | None
    label: str
    defect_type: str


@dataclass(frozen=True)
class DatasetIndex:
    """Deterministic listing of one category's train and test splits."""

    category: str
    train: tuple[DatasetItem, ...]
    test: tuple[DatasetItem, ...]

    @property
    def has_all_masks(self) -> bool:
        return all(item.mask_path is not None for item in self.test if item.label == LABEL_ANOMALOUS)


def load_dataset(root: Path | str, category: str) -> DatasetIndex:
    """Index one category under the MVTec convention.

    Anomalous test images resolve their mask as
    `ground_truth/<defect_type>/<stem>_mask.png`.  A missing mask file while
    the defect type's ground-truth directory exists is treated as a naming
    mismatch and raises; a missing ground-truth directory marks the items
    mask-less instead (pixel metrics are then unavailable).
    """
    category_dir = Path(root) / category
    train_dir = category_dir / "train" / "good"
    test_dir = category_dir / "test"
    if not train_dir.is_dir():
        raise FileNotFoundError(f"missing train split: {train_dir}")
    if not test_dir.is_dir():
        raise FileNotFoundError(f"missing test split: {test_dir}")

    train = tuple(
        DatasetItem(image_path=p, mask_path=None, label=LABEL_NORMAL, defect_type="good")
        for p in list_images(train_dir)
    )

    test: list[DatasetItem] = []
    for defect_dir in sorted(d for d in test_dir.iterdir() if d.is_dir()):
        defect_type = defect_dir.name
        gt_dir = category_dir / "ground_truth" / defect_type
        for image_path in list_images(defect_dir):
            if defect_type == "good":
                test.append(DatasetItem(image_path, None, LABEL_NORMAL, defect_type))
                continue
            mask_path: Path | None = None
            if gt_dir.is_dir():
                mask_path = gt_dir / f"{image_path.stem}_mask.png"
                if not mask_path.is_file():
                    raise FileNotFoundError(
                        f"image {image_path} has no matching mask {mask_path}"
                    )
            test.append(DatasetItem(image_path, mask_path, LABEL_ANOMALOUS, defect_type))

    if not train:
        raise FileNotFoundError(f"no training images under {train_dir}")
    return DatasetIndex(category=category, train=train, test=tuple(test))
