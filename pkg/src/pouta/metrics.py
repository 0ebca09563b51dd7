"""Image-level scoring and evaluation metrics.

The image-level anomaly score is the maximum of a 21x21 mean filter applied
to the heatmap (zero-padded, same size, so border windows still average over
the full 441-cell kernel).  Classification quality is measured by AUROC with
half-credit for ties, localization by pixel AUROC and average precision over
the ranked pixel scores.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import rankdata

from .data import DatasetItem, LABEL_ANOMALOUS, load_image, load_mask

POOL_SIZE = 21


class UndefinedMetricError(ValueError):
    """Raised when a metric is undefined for the given inputs (e.g. one class only)."""


def image_score(heatmap: np.ndarray, pool_size: int = POOL_SIZE) -> float:
    """Maximum of the pool_size x pool_size mean filter over the heatmap."""
    heatmap = np.asarray(heatmap, dtype=np.float64)
    if heatmap.ndim != 2:
        raise ValueError(f"heatmap must be 2-D, got shape {heatmap.shape}")
    if min(heatmap.shape) < pool_size:
        raise ValueError(f"heatmap {heatmap.shape} is smaller than the {pool_size}x{pool_size} kernel")
    pad = pool_size // 2
    padded = np.pad(heatmap, pad, mode="constant", constant_values=0.0)
    windows = sliding_window_view(padded, (pool_size, pool_size))
    return float(windows.mean(axis=(2, 3)).max())


def auroc(scores, labels) -> float:
    """Area under the ROC curve: P(score_pos > score_neg) + 0.5 * P(tie)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D arrays of equal length")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both classes present")
    ranks = rankdata(scores)  # average ranks give half-credit ties
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Area under the precision-recall curve over the descending-ranked scores.

    Ties are broken by stable input order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D arrays of equal length")
    n_pos = int((labels == 1).sum())
    if n_pos == 0:
        raise UndefinedMetricError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    ranked = labels[order] == 1
    cum_tp = np.cumsum(ranked)
    precision = cum_tp / np.arange(1, len(ranked) + 1)
    return float(precision[ranked].sum() / n_pos)


@dataclass(frozen=True)
class ScoreReport:
    """Per-image result: the heatmap and its pooled-max image score."""

    image_score: float
    heatmap: np.ndarray
    source_path: str


@dataclass(frozen=True)
class MetricsReport:
    """Aggregated category metrics; pixel metrics are None when masks are missing."""

    image_auroc: float
    pixel_auroc: float | None
    pixel_ap: float | None
    mean_latency_ms: float
    n_images: int
    pixel_metrics_available: bool


def predict_heatmap(model: torch.nn.Module, image: np.ndarray) -> np.ndarray:
    """Run one image through the model in eval mode; returns the H x W heatmap."""
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            batch = torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1)))[None]
            output = model(batch)
        return output.heatmap[0].numpy()
    finally:
        model.train(was_training)


def evaluate_category(
    model: torch.nn.Module,
    items: list[DatasetItem] | tuple[DatasetItem, ...],
    image_size: int,
) -> MetricsReport:
    """Image AUROC over pooled scores plus pixel AUROC/AP over all heatmap pixels.

    Latency covers the inference path only (forward + scoring), averaged over
    the split.  When any anomalous item lacks a mask, pixel metrics are
    omitted and flagged instead of silently computed on partial ground truth.
    """
    if not items:
        raise ValueError("cannot evaluate an empty split")
    masks_available = all(item.mask_path is not None for item in items if item.label == LABEL_ANOMALOUS)

    scores, labels, latencies = [], [], []
    pixel_scores, pixel_labels = [], []
    for item in items:
        image = load_image(item.image_path, image_size)
        start = time.perf_counter()
        heatmap = predict_heatmap(model, image)
        score = image_score(heatmap)
        latencies.append((time.perf_counter() - start) * 1000.0)
        scores.append(score)
        labels.append(1 if item.label == LABEL_ANOMALOUS else 0)
        if masks_available:
            if item.mask_path is not None:
                mask = load_mask(item.mask_path, image_size)
            else:
                mask = np.zeros((image_size, image_size), dtype=np.float32)
            pixel_scores.append(heatmap.reshape(-1))
            pixel_labels.append(mask.reshape(-1).astype(np.int64))

    image_metric = auroc(np.asarray(scores), np.asarray(labels))
    pixel_metric = pixel_ap = None
    if masks_available:
        flat_scores = np.concatenate(pixel_scores)
        flat_labels = np.concatenate(pixel_labels)
        pixel_metric = auroc(flat_scores, flat_labels)
        pixel_ap = average_precision(flat_scores, flat_labels)
    return MetricsReport(
        image_auroc=image_metric,
        pixel_auroc=pixel_metric,
        pixel_ap=pixel_ap,
        mean_latency_ms=float(np.mean(latencies)),
        n_images=len(items),
        pixel_metrics_available=masks_available,
    )


@dataclass(frozen=True)
class LatencyReport:
    mean_ms: float
    std_ms: float
    iterations: int


def benchmark_latency(
    model: torch.nn.Module,
    image_size: int,
    iterations: int = 100,
    warmup: int = 10,
    seed: int = 0,
) -> LatencyReport:
    """Mean single-image inference time after warm-up runs."""
    if iterations < 1:
        raise ValueError("iterations must be positive")
    rng = np.random.default_rng(seed)
    image = rng.random((image_size, image_size, 3), dtype=np.float32)
    for _ in range(warmup):
        predict_heatmap(model, image)
    times = []
    for _ in range(iterations):
        start = time.perf_counter()
        predict_heatmap(model, image)
        times.append((time.perf_counter() - start) * 1000.0)
    return LatencyReport(mean_ms=float(np.mean(times)), std_ms=float(np.std(times)), iterations=iterations)


def write_metrics_csv(path: Path | str, category: str, report: MetricsReport) -> Path:
    """Append-free CSV writer with the documented eval columns."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    def fmt(value):
        return "" if value is None else f"{value:.6f}"
    lines = [
        "category,n_images,image_auroc,pixel_auroc,pixel_ap,mean_latency_ms",
        f"{category},{report.n_images},{fmt(report.image_auroc)},{fmt(report.pixel_auroc)},"
        f"{fmt(report.pixel_ap)},{report.mean_latency_ms:.3f}",
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
