"""Supervised reconstruction loss plus the scale-equivariance regulariser.

For a scene ``x`` with measurement ``y = wrap(x, b)`` the objective per sample is

    mse(x, f(z(y)))  +  gamma * mean_k mse(alpha_k x, f(z(wrap(alpha_k x, b))))

with ``alpha_k ~ U(a, b)``. Changing the exposure moves the wrap boundaries
while the scene content stays the same, so the second term penalises a
restorer that confuses wrap edges with real edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from ..features import FeatureConfig, Normalization, build_features
from ..sensor import HdrImage, ModuloImage, wrap, wrap_array
from .model import ToyRestorer


class Reduction(str, Enum):
    MEAN = "mean"
    SUM = "sum"


class EqTarget(str, Enum):
    SCALED_TRUTH = "scaled-truth"  # || alpha x - f(y_s) ||^2
    SCALED_PREDICTION = "scaled-prediction"  # || alpha f(y) - f(y_s) ||^2


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.1
    alpha_range: tuple[float, float] = (0.9, 1.1)
    lr: float = 1e-3
    batch_size: int = 8
    epochs: int = 500
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    alpha_draws: int = 1
    reduction: Reduction = Reduction.MEAN
    eq_target: EqTarget = EqTarget.SCALED_TRUTH

    def __post_init__(self):
        a, b = self.alpha_range
        if not 0 < a <= b:
            raise ValueError(f"alpha_range must satisfy 0 < a <= b, got {self.alpha_range}")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.batch_size < 1 or self.epochs < 0 or self.alpha_draws < 1:
            raise ValueError("batch_size and alpha_draws must be >= 1, epochs >= 0")
        object.__setattr__(self, "alpha_range", (float(a), float(b)))
        object.__setattr__(self, "reduction", Reduction(self.reduction))
        object.__setattr__(self, "eq_target", EqTarget(self.eq_target))

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "alpha_range": list(self.alpha_range),
            "lr": self.lr,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "optimizer": {"name": "adam", "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps},
            "alpha_draws": self.alpha_draws,
            "reduction": self.reduction.value,
            "eq_target": self.eq_target.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        opt = d.get("optimizer", {})
        return cls(
            gamma=d["gamma"],
            alpha_range=tuple(d["alpha_range"]),
            lr=d["lr"],
            batch_size=d["batch_size"],
            epochs=d["epochs"],
            seed=d["seed"],
            beta1=opt.get("beta1", 0.9),
            beta2=opt.get("beta2", 0.999),
            eps=opt.get("eps", 1e-8),
            alpha_draws=d.get("alpha_draws", 1),
            reduction=d.get("reduction", "mean"),
            eq_target=d.get("eq_target", "scaled-truth"),
        )


@dataclass
class LossReport:
    rec: float
    eq: float
    total: float
    alpha_samples: list[float] = field(default_factory=list)


class Tape:
    """Forward passes recorded for :func:`backward`.

    Each entry holds the layer caches of one forward call and the gradient of
    the scalar objective with respect to that call's network output.
    """

    def __init__(self):
        self.entries = []

    def record(self, caches, grad_out: np.ndarray) -> None:
        self.entries.append((caches, grad_out))

    def __len__(self):
        return len(self.entries)


def backward(model: ToyRestorer, tape: Tape) -> np.ndarray:
    """Accumulate the flat parameter gradient over every recorded forward pass."""
    if tape is None or not len(tape):
        raise RuntimeError("backward called without a recorded forward pass")
    grad = np.zeros_like(model.theta)
    for caches, gout in tape.entries:
        grad += model.backward(caches, gout)
    return grad


def _arr(v) -> np.ndarray:
    return v.data if isinstance(v, (HdrImage, ModuloImage)) else np.asarray(v, dtype=np.float64)


def loss_rec(x, xhat, reduction: Reduction | str = Reduction.MEAN) -> float:
    """Mean (or summed) squared error between a scene and its estimate."""
    x, xhat = _arr(x), _arr(xhat)
    if x.shape != xhat.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {xhat.shape}")
    sq = (x - xhat) ** 2
    return float(sq.sum() if Reduction(reduction) is Reduction.SUM else sq.mean())


def _rec_grad(x: np.ndarray, xhat: np.ndarray, reduction: Reduction) -> np.ndarray:
    g = 2.0 * (xhat - x)
    return g if reduction is Reduction.SUM else g / x.size


def output_scale(y: ModuloImage, cfg: FeatureConfig) -> float:
    """Factor mapping network output back to scene units."""
    return y.threshold if cfg.normalization is Normalization.THRESHOLD else 1.0


def make_model(cfg: FeatureConfig, image_channels: int, hidden=(8, 8), seed: int = 0) -> ToyRestorer:
    return ToyRestorer(cfg.channel_count(image_channels), image_channels, hidden, skip=cfg.use_raw, seed=seed)


def restore(model: ToyRestorer, y: ModuloImage, cfg: FeatureConfig) -> np.ndarray:
    """Run the restorer on a single measurement; returns an ``(H, W, C)`` estimate."""
    z = build_features(y, cfg).data
    return output_scale(y, cfg) * model(z[None])[0]


@dataclass
class Sample:
    """Training pair with cached network input for the unscaled measurement."""

    x: HdrImage
    y: ModuloImage
    z: np.ndarray | None = None

    def features(self, cfg: FeatureConfig) -> np.ndarray:
        if self.z is None:
            self.z = build_features(self.y, cfg).data
        return self.z


def make_samples(scenes: Sequence[HdrImage], b: int, cfg: FeatureConfig | None = None) -> list[Sample]:
    samples = [Sample(x, wrap(x, b)) for x in scenes]
    if cfg is not None:
        for s in samples:
            s.features(cfg)
    return samples


def _as_sample(item) -> Sample:
    if isinstance(item, Sample):
        return item
    x, y = item
    return Sample(x if isinstance(x, HdrImage) else HdrImage(x), y)


def _scaled_input(x: np.ndarray, alpha: float, b: int, cfg: FeatureConfig):
    y_s = ModuloImage(wrap_array(alpha * x, b), b)
    return build_features(y_s, cfg).data, output_scale(y_s, cfg)


def _same_shape(items) -> bool:
    return len({i.shape for i in items}) == 1


def loss_eq(
    x,
    model: ToyRestorer,
    cfg: FeatureConfig,
    alphas: Sequence[float],
    b: int,
    reduction: Reduction | str = Reduction.MEAN,
    eq_target: EqTarget | str = EqTarget.SCALED_TRUTH,
) -> float:
    """Average over ``alphas`` of the loss on exposure-scaled copies of ``x``."""
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise ValueError("loss_eq needs at least one alpha")
    if any(not (a > 0 and np.isfinite(a)) for a in alphas):
        raise ValueError("alphas must be positive and finite")
    xa = _arr(x)
    reduction = Reduction(reduction)
    zs, scales = zip(*(_scaled_input(xa, a, b, cfg) for a in alphas))
    if EqTarget(eq_target) is EqTarget.SCALED_TRUTH:
        targets = [a * xa for a in alphas]
    else:
        base = restore(model, ModuloImage(wrap_array(xa, b), b), cfg)
        targets = [a * base for a in alphas]
    losses, _ = _run_weighted(model, list(zs), list(scales), targets, None, reduction, None)
    return float(np.mean(losses))


def total_objective(
    batch,
    model: ToyRestorer,
    cfg: FeatureConfig,
    tc: TrainConfig,
    rng: np.random.Generator | None = None,
    tape: Tape | None = None,
    alphas: Sequence[Sequence[float]] | None = None,
) -> LossReport:
    """Monte-Carlo estimate of the batch objective ``rec + gamma * eq``.

    ``alphas`` may fix the scale draws (one list per sample); otherwise
    ``tc.alpha_draws`` values per sample are drawn from ``U(*tc.alpha_range)``
    using ``rng`` (seeded from ``tc.seed`` when omitted). The equivariance term
    is always evaluated so the report is comparable across ``gamma`` values;
    it only reaches the tape when ``gamma > 0``.
    """
    samples = [_as_sample(s) for s in batch]
    if not samples:
        raise ValueError("empty batch")
    n = len(samples)
    red = tc.reduction
    if alphas is None:
        rng = rng if rng is not None else np.random.default_rng(tc.seed)
        lo, hi = tc.alpha_range
        alphas = [list(rng.uniform(lo, hi, size=tc.alpha_draws)) for _ in samples]
    elif len(alphas) != n:
        raise ValueError("need one alpha list per sample")

    groups = [list(range(n))] if _same_shape([s.x for s in samples]) else [[i] for i in range(n)]
    rec_losses = np.empty(n)
    base_pred = [None] * n
    for idx in groups:
        zs = [samples[i].features(cfg) for i in idx]
        scales = [output_scale(samples[i].y, cfg) for i in idx]
        targets = [samples[i].x.data for i in idx]
        losses, xhat = _run_weighted(model, zs, scales, targets, [1.0 / n] * len(idx), red, tape)
        rec_losses[idx] = losses
        for k, i in enumerate(idx):
            base_pred[i] = xhat[k]

    eq_losses = np.zeros(n)
    flat = [(i, float(a)) for i in range(n) for a in alphas[i]]
    if any(not a > 0 for _, a in flat):
        raise ValueError("alphas must be positive")
    eq_tape = tape if tc.gamma > 0 else None
    for idx in groups:
        members = set(idx)
        items = [(i, a) for i, a in flat if i in members]
        zs, scales, targets, weights = [], [], [], []
        for i, a in items:
            s = samples[i]
            z_s, sc = _scaled_input(s.x.data, a, s.y.bit_depth, cfg)
            zs.append(z_s)
            scales.append(sc)
            weights.append(tc.gamma / (n * len(alphas[i])))
            if tc.eq_target is EqTarget.SCALED_TRUTH:
                targets.append(a * s.x.data)
            else:
                targets.append(a * base_pred[i])
        if tc.eq_target is EqTarget.SCALED_TRUTH or eq_tape is None:
            losses, _ = _run_weighted(model, zs, scales, targets, weights, red, eq_tape)
        else:
            losses = _run_equivariant(model, samples, idx, items, zs, scales, targets, weights, cfg, red, eq_tape)
        for (i, _), loss in zip(items, losses):
            eq_losses[i] += loss / len(alphas[i])

    rec = float(rec_losses.mean())
    eq = float(eq_losses.mean())
    return LossReport(rec, eq, rec + tc.gamma * eq, [a for _, a in flat])


def _run_weighted(model, zs, scales, targets, weights, reduction, tape):
    """Forward ``zs`` as one batch; record ``weights[k] * d loss_k / d out_k`` on ``tape``."""
    z = np.stack(zs)
    out, caches = model.forward(z)
    sc = np.asarray(scales)[:, None, None, None]
    xhat = sc * out
    losses = [loss_rec(t, p, reduction) for t, p in zip(targets, xhat)]
    if tape is not None:
        w = np.asarray(weights)[:, None, None, None]
        g = np.stack([_rec_grad(t, p, reduction) for t, p in zip(targets, xhat)])
        tape.record(caches, w * sc * g)
    return losses, xhat


def _run_equivariant(model, samples, idx, items, zs, scales, targets, weights, cfg, reduction, tape):
    """Scaled-prediction target: gradient flows through both ``f(y_s)`` and ``alpha f(y)``."""
    losses, z_out = _run_weighted(model, zs, scales, targets, weights, reduction, tape)
    # second path: d/d f(y) of || alpha f(y) - f(y_s) ||^2
    base_z = np.stack([samples[i].features(cfg) for i, _ in items])
    out, caches = model.forward(base_z)
    base_sc = np.asarray([output_scale(samples[i].y, cfg) for i, _ in items])[:, None, None, None]
    xhat_base = base_sc * out
    grads = []
    for k, (i, a) in enumerate(items):
        diff = a * xhat_base[k] - z_out[k]
        g = 2.0 * a * diff
        if reduction is Reduction.MEAN:
            g = g / diff.size
        grads.append(g)
    w = np.asarray(weights)[:, None, None, None]
    tape.record(caches, w * base_sc * np.stack(grads))
    return losses
