"""Self-describing checkpoint container.

Layout: 6-byte magic "POUTA1", little-endian uint32 format version,
little-endian uint64 header length, UTF-8 JSON header, then the raw tensor
bytes.  The header carries the config snapshot, the epoch, and one manifest
entry per tensor (name, dtype, shape, offset, nbytes), sorted by name, so
save -> load -> save reproduces the file byte for byte.  Writes are atomic
(temp file + rename).
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

MAGIC = b"POUTA1"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Raised for missing, corrupt, or version-incompatible checkpoint files."""


@dataclass
class Checkpoint:
    """In-memory checkpoint: named weight arrays plus the config snapshot."""

    weights: dict[str, np.ndarray]
    config: dict
    epoch: int
    format_version: int = FORMAT_VERSION

    def state_dict(self) -> dict[str, torch.Tensor]:
        return {name: torch.from_numpy(array.copy()) for name, array in self.weights.items()}


def save_checkpoint(
    path: Path | str,
    state_dict: dict[str, torch.Tensor],
    config: dict,
    epoch: int,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    arrays = {
        name: tensor.detach().cpu().numpy() for name, tensor in sorted(state_dict.items())
    }
    manifest = []
    offset = 0
    for name, array in arrays.items():
        nbytes = array.nbytes
        manifest.append(
            {
                "name": name,
                "dtype": str(array.dtype),
                "shape": list(array.shape),
                "offset": offset,
                "nbytes": nbytes,
            }
        )
        offset += nbytes
    header = json.dumps(
        {"config": config, "epoch": epoch, "tensors": manifest},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")

    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(np.uint32(FORMAT_VERSION).tobytes())
            fh.write(np.uint64(len(header)).tobytes())
            fh.write(header)
            for array in arrays.values():
                fh.write(np.ascontiguousarray(array).tobytes())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def load_checkpoint(path: Path | str) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

    if len(blob) < len(MAGIC) + 12 or blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    cursor = len(MAGIC)
    version = int(np.frombuffer(blob, dtype=np.uint32, count=1, offset=cursor)[0])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path} has format version {version}, this build reads version {FORMAT_VERSION}")
    cursor += 4
    header_len = int(np.frombuffer(blob, dtype=np.uint64, count=1, offset=cursor)[0])
    cursor += 8
    try:
        header = json.loads(blob[cursor : cursor + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path} has a corrupt header: {exc}") from exc
    cursor += header_len

    weights: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        start = cursor + entry["offset"]
        end = start + entry["nbytes"]
        if end > len(blob):
            raise CheckpointError(f"{path} is truncated at tensor {entry['name']!r}")
        array = np.frombuffer(blob[start:end], dtype=np.dtype(entry["dtype"]))
        weights[entry["name"]] = array.reshape(entry["shape"]).copy()
    return Checkpoint(weights=weights, config=header["config"], epoch=int(header["epoch"]), format_version=version)
