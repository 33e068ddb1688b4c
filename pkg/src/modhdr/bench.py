"""Toy ablation benchmark: input-feature rows and the equivariance weight.

Every run trains a fresh :class:`ToyRestorer` on the ``train`` split of a
synthetic dataset and scores it on the ``test`` split.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .features import FEATURE_ROWS, FeatureConfig
from .learn.objective import TrainConfig, loss_eq, loss_rec, make_samples, restore
from .learn.train import train
from .metrics import MetricReport, evaluate
from .scenes import SceneKind, SceneSpec, generate, scene_seed, split_counts

log = logging.getLogger(__name__)

EQ_EVAL_DRAWS = 4


@dataclass(frozen=True)
class BenchConfig:
    scenes: int = 200
    size: int = 16
    channels: int = 1
    bit_depth: int = 4
    peak_factor: float = 3.0
    kinds: tuple[str, ...] = tuple(k.value for k in SceneKind)
    splits: tuple[float, float, float] = (0.7, 0.15, 0.15)
    dataset_seed: int = 2024
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    epochs: int = 200
    lr: float = 1e-3
    batch_size: int = 8
    gamma: float = 0.1
    alpha_range: tuple[float, float] = (0.9, 1.1)
    eval_seed: int = 99

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


@dataclass
class RunResult:
    features: str
    gamma: float
    seed: int
    metrics: dict
    heldout_rec: float
    heldout_eq: float
    seconds: float
    trace_total: list[float] = field(default_factory=list)


def benchmark_scenes(bc: BenchConfig):
    """Return ``(train, val, test)`` lists of HdrImage for the benchmark dataset."""
    specs = [
        SceneSpec(bc.kinds[k % len(bc.kinds)], (bc.size, bc.size), bc.channels, bc.peak_factor,
                  bc.bit_depth, scene_seed(bc.dataset_seed, k))
        for k in range(bc.scenes)
    ]
    imgs = [generate(s) for s in specs]
    n_train, n_val, _ = split_counts(len(imgs), bc.splits)
    return imgs[:n_train], imgs[n_train : n_train + n_val], imgs[n_train + n_val :]


def _mean_metrics(reports: list[MetricReport]) -> dict:
    out = {}
    for col in MetricReport.COLUMNS:
        vals = np.array([getattr(r, col) for r in reports])
        finite = vals[np.isfinite(vals)]
        out[col] = float(finite.mean()) if finite.size else math.inf
    return out


def score(model, cfg: FeatureConfig, test, bc: BenchConfig) -> tuple[dict, float, float]:
    """Mean per-image metrics, held-out reconstruction loss and held-out equivariance loss.

    Estimates are clamped at zero before metrics (radiance is nonnegative);
    losses use the raw network output. Scale draws come from ``bc.eval_seed``
    so every model sees the same draws.
    """
    rng = np.random.default_rng(bc.eval_seed)
    samples = make_samples(test, bc.bit_depth)
    reports, recs, eqs = [], [], []
    for s in samples:
        xhat = restore(model, s.y, cfg)
        recs.append(loss_rec(s.x, xhat))
        reports.append(evaluate(s.x, np.maximum(xhat, 0.0)))
        eqs.append(loss_eq(s.x, model, cfg, rng.uniform(*bc.alpha_range, size=EQ_EVAL_DRAWS), bc.bit_depth))
    return _mean_metrics(reports), float(np.mean(recs)), float(np.mean(eqs))


def run_one(features: str, gamma: float, seed: int, bc: BenchConfig, data=None) -> RunResult:
    train_set, _, test = data if data is not None else benchmark_scenes(bc)
    cfg = FeatureConfig.from_name(features)
    tc = TrainConfig(gamma=gamma, alpha_range=bc.alpha_range, lr=bc.lr, batch_size=bc.batch_size,
                     epochs=bc.epochs, seed=seed)
    t0 = time.perf_counter()
    model, trace = train(make_samples(train_set, bc.bit_depth), cfg, tc)
    metrics, rec, eq = score(model, cfg, test, bc)
    dt = time.perf_counter() - t0
    log.info("%s gamma=%g seed=%d psnr_y_pu=%.3f psnr_l=%.3f eq=%.4g (%.1fs)",
             features, gamma, seed, metrics["psnr_y_pu"], metrics["psnr_l"], eq, dt)
    return RunResult(features, gamma, seed, metrics, rec, eq, dt, [e.total for e in trace])


def run_benchmark(bc: BenchConfig = BenchConfig(), features=tuple(FEATURE_ROWS), chosen: str = "y+diff"):
    """Train each feature row at ``gamma = 0`` and the chosen row again at ``bc.gamma``.

    Returns a list of :class:`RunResult`, one per (row, gamma, seed).
    """
    data = benchmark_scenes(bc)
    results = []
    for name in features:
        for seed in bc.seeds:
            results.append(run_one(name, 0.0, seed, bc, data))
    if bc.gamma > 0:
        for seed in bc.seeds:
            results.append(run_one(chosen, bc.gamma, seed, bc, data))
    return results


def aggregate(results: list[RunResult]) -> list[dict]:
    """Median over seeds per (features, gamma) row, in first-seen order."""
    rows, order = {}, []
    for r in results:
        key = (r.features, r.gamma)
        if key not in rows:
            rows[key] = []
            order.append(key)
        rows[key].append(r)
    out = []
    for key in order:
        rs = rows[key]
        row = {"features": key[0], "gamma": key[1], "seeds": len(rs)}
        for col in MetricReport.COLUMNS:
            row[col] = float(np.median([r.metrics[col] for r in rs]))
        row["heldout_rec"] = float(np.median([r.heldout_rec for r in rs]))
        row["heldout_eq"] = float(np.median([r.heldout_eq for r in rs]))
        out.append(row)
    return out


TABLE_COLUMNS = ("features", "gamma", "seeds", *MetricReport.COLUMNS, "heldout_rec", "heldout_eq")


def markdown_table(rows: list[dict]) -> str:
    """Rows ranked by ``psnr_y_pu`` (best first)."""
    ranked = sorted(rows, key=lambda r: -r["psnr_y_pu"])
    lines = ["| " + " | ".join(TABLE_COLUMNS) + " |", "|" + "---|" * len(TABLE_COLUMNS)]
    for r in ranked:
        cells = [r["features"], f"{r['gamma']:g}", str(r["seeds"])]
        cells += [f"{r[c]:.4f}" for c in TABLE_COLUMNS[3:]]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def with_overrides(bc: BenchConfig, **kw) -> BenchConfig:
    return replace(bc, **{k: v for k, v in kw.items() if v is not None})
