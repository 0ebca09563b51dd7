"""Training configuration and its plain-text key=value file format.

Config files use INI sections; every field below has a key, and CLI flags
override file values::

    [train]
    epochs = 600
    batch_size = 8
    base_lr = 0.0002
    lr_decay_epochs = 480,540
    lr_decay_factor = 0.2
    image_size = 224
    variant = full
    k_shot =
    seed = 0
    width_scale = 1.0
    max_steps =

    [loss]
    lambda1 = 0.4
    lambda2 = 0.3
    lambda3 = 0.2
    lambda4 = 0.1
    focal_gamma = 2.0
    focal_alpha = 1.0

    [synthesis]
    normal_fraction = 0.5
    opacity_min = 0.15
    opacity_max = 1.0
    transforms = identity,translation,rotation
    frequency_min = 0
    frequency_max = 5
    mask_threshold = 0.5
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .objectives import LossWeights
from .variants import VARIANTS


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 600
    batch_size: int = 8
    base_lr: float = 2e-4
    lr_decay_epochs: tuple[int, ...] = (480, 540)
    lr_decay_factor: float = 0.2
    image_size: int = 224
    variant: str = "full"
    k_shot: int | None = None
    seed: int = 0
    width_scale: float = 1.0
    max_steps: int | None = None
    loss: LossWeights = field(default_factory=LossWeights)
    normal_fraction: float = 0.5
    opacity_range: tuple[float, float] = (0.15, 1.0)
    transforms: tuple[str, ...] = ("identity", "translation", "rotation")
    frequency_range: tuple[int, int] = (0, 5)
    mask_threshold: float = 0.5

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be positive, got {self.epochs}")
        if any(e >= self.epochs or e < 0 for e in self.lr_decay_epochs):
            raise ValueError(f"decay epochs {self.lr_decay_epochs} must lie in [0, epochs={self.epochs})")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.k_shot is not None and self.k_shot < 1:
            raise ValueError(f"k_shot must be positive when set, got {self.k_shot}")
        if not 0 < self.width_scale <= 1:
            raise ValueError(f"width_scale must lie in (0, 1], got {self.width_scale}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "base_lr": self.base_lr,
            "lr_decay_epochs": list(self.lr_decay_epochs),
            "lr_decay_factor": self.lr_decay_factor,
            "image_size": self.image_size,
            "variant": self.variant,
            "k_shot": self.k_shot,
            "seed": self.seed,
            "width_scale": self.width_scale,
            "max_steps": self.max_steps,
            "loss": {
                "lambda1": self.loss.scale_weights[0],
                "lambda2": self.loss.scale_weights[1],
                "lambda3": self.loss.scale_weights[2],
                "lambda4": self.loss.scale_weights[3],
                "focal_gamma": self.loss.focal_gamma,
                "focal_alpha": self.loss.focal_alpha,
            },
            "normal_fraction": self.normal_fraction,
            "opacity_range": list(self.opacity_range),
            "transforms": list(self.transforms),
            "frequency_range": list(self.frequency_range),
            "mask_threshold": self.mask_threshold,
        }

    @staticmethod
    def from_dict(data: dict) -> "TrainConfig":
        loss = data.get("loss", {})
        return TrainConfig(
            epochs=int(data["epochs"]),
            batch_size=int(data["batch_size"]),
            base_lr=float(data["base_lr"]),
            lr_decay_epochs=tuple(int(e) for e in data["lr_decay_epochs"]),
            lr_decay_factor=float(data["lr_decay_factor"]),
            image_size=int(data["image_size"]),
            variant=str(data["variant"]),
            k_shot=None if data.get("k_shot") is None else int(data["k_shot"]),
            seed=int(data["seed"]),
            width_scale=float(data.get("width_scale", 1.0)),
            max_steps=None if data.get("max_steps") is None else int(data["max_steps"]),
            loss=LossWeights(
                scale_weights=(
                    float(loss.get("lambda1", 0.4)),
                    float(loss.get("lambda2", 0.3)),
                    float(loss.get("lambda3", 0.2)),
                    float(loss.get("lambda4", 0.1)),
                ),
                focal_gamma=float(loss.get("focal_gamma", 2.0)),
                focal_alpha=float(loss.get("focal_alpha", 1.0)),
            ),
            normal_fraction=float(data.get("normal_fraction", 0.5)),
            opacity_range=tuple(float(v) for v in data.get("opacity_range", (0.15, 1.0))),
            transforms=tuple(data.get("transforms", ("identity", "translation", "rotation"))),
            frequency_range=tuple(int(v) for v in data.get("frequency_range", (0, 5))),
            mask_threshold=float(data.get("mask_threshold", 0.5)),
        )


def _get(parser: configparser.ConfigParser, section: str, key: str) -> str | None:
    if parser.has_option(section, key):
        value = parser.get(section, key).strip()
        return value or None
    return None


def load_config(path: Path | str, base: TrainConfig | None = None) -> TrainConfig:
    """Parse a key=value config file on top of `base` (defaults when omitted)."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.read(path, encoding="utf-8")
    config = base if base is not None else TrainConfig()

    updates: dict = {}
    mapping = {
        ("train", "epochs"): ("epochs", int),
        ("train", "batch_size"): ("batch_size", int),
        ("train", "base_lr"): ("base_lr", float),
        ("train", "lr_decay_factor"): ("lr_decay_factor", float),
        ("train", "image_size"): ("image_size", int),
        ("train", "variant"): ("variant", str),
        ("train", "k_shot"): ("k_shot", int),
        ("train", "seed"): ("seed", int),
        ("train", "width_scale"): ("width_scale", float),
        ("train", "max_steps"): ("max_steps", int),
        ("synthesis", "normal_fraction"): ("normal_fraction", float),
        ("synthesis", "mask_threshold"): ("mask_threshold", float),
    }
    for (section, key), (name, cast) in mapping.items():
        raw = _get(parser, section, key)
        if raw is not None:
            updates[name] = cast(raw)

    raw = _get(parser, "train", "lr_decay_epochs")
    if raw is not None:
        updates["lr_decay_epochs"] = tuple(int(v) for v in raw.split(","))
    raw = _get(parser, "synthesis", "transforms")
    if raw is not None:
        updates["transforms"] = tuple(v.strip() for v in raw.split(","))

    opacity = list(config.opacity_range)
    for i, key in enumerate(("opacity_min", "opacity_max")):
        raw = _get(parser, "synthesis", key)
        if raw is not None:
            opacity[i] = float(raw)
    updates["opacity_range"] = tuple(opacity)

    frequency = list(config.frequency_range)
    for i, key in enumerate(("frequency_min", "frequency_max")):
        raw = _get(parser, "synthesis", key)
        if raw is not None:
            frequency[i] = int(raw)
    updates["frequency_range"] = tuple(frequency)

    weights = list(config.loss.scale_weights)
    for i in range(4):
        raw = _get(parser, "loss", f"lambda{i + 1}")
        if raw is not None:
            weights[i] = float(raw)
    gamma = _get(parser, "loss", "focal_gamma")
    alpha = _get(parser, "loss", "focal_alpha")
    updates["loss"] = LossWeights(
        scale_weights=tuple(weights),
        focal_gamma=float(gamma) if gamma is not None else config.loss.focal_gamma,
        focal_alpha=float(alpha) if alpha is not None else config.loss.focal_alpha,
    )
    return replace(config, **updates)
