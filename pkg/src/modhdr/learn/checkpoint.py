"""Checkpoint and loss-trace files.

Checkpoint layout: the 8 bytes ``MODHDRCK``, a little-endian uint64 header
length, a UTF-8 JSON header, then the parameters as little-endian float64.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from ..features import FeatureConfig
from .model import ToyRestorer
from .objective import TrainConfig

MAGIC = b"MODHDRCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model: ToyRestorer, cfg: FeatureConfig, tc: TrainConfig, extra: dict | None = None) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "architecture": model.architecture(),
        "feature_config": cfg.to_dict(),
        "train_config": tc.to_dict(),
        "seed": tc.seed,
        "parameter_count": int(model.theta.size),
    }
    if extra:
        header.update(extra)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        f.write(model.theta.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[ToyRestorer, FeatureConfig, TrainConfig, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (n,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + n].decode("utf-8"))
    arch = header["architecture"]
    chans = arch["layer_channels"]
    model = ToyRestorer(chans[0], chans[-1], chans[1:-1], skip=arch["skip"])
    params = np.frombuffer(raw[16 + n :], dtype="<f8")
    if params.size != model.theta.size:
        raise CheckpointError(f"{path}: expected {model.theta.size} parameters, found {params.size}")
    model.set_theta(params)
    cfg = FeatureConfig.from_dict(header["feature_config"])
    if cfg.channel_count(chans[-1]) != chans[0]:
        raise CheckpointError(f"{path}: feature config does not match architecture input channels")
    return model, cfg, TrainConfig.from_dict(header["train_config"]), header


def write_loss_csv(path, trace) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "rec", "eq", "weighted_eq", "total"])
        for e in trace:
            w.writerow([e.epoch, repr(e.rec), repr(e.eq), repr(e.weighted_eq), repr(e.total)])


def read_loss_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return [{k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()} for row in csv.DictReader(f)]
