"""Adam training loop for :class:`ToyRestorer`."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..features import FeatureConfig
from .model import ToyRestorer
from .objective import LossReport, Sample, Tape, TrainConfig, _as_sample, backward, make_model, total_objective

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"loss became non-finite at epoch {epoch}")


class Adam:
    def __init__(self, size: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        """Update ``theta`` in place."""
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class EpochLoss:
    epoch: int
    rec: float
    eq: float
    total: float
    weighted_eq: float = 0.0  # gamma * eq, the part of total due to the regulariser


def _streams(seed: int):
    init_seq, data_seq = np.random.SeedSequence(seed).spawn(2)
    return int(init_seq.generate_state(1)[0]), np.random.default_rng(data_seq)


def train(
    dataset,
    cfg: FeatureConfig,
    tc: TrainConfig,
    model: ToyRestorer | None = None,
    hidden=(8, 8),
) -> tuple[ToyRestorer, list[EpochLoss]]:
    """Minimise ``rec + gamma * eq`` over ``dataset`` with Adam.

    ``dataset`` holds :class:`Sample` objects or ``(HdrImage, ModuloImage)``
    pairs. Weight init, shuffling and scale draws all derive from ``tc.seed``,
    so two calls with equal arguments produce bit-identical parameters and
    loss traces.
    """
    samples = [_as_sample(s) for s in dataset]
    if not samples:
        raise ValueError("dataset is empty")
    init_seed, rng = _streams(tc.seed)
    if model is None:
        model = make_model(cfg, samples[0].x.channels, hidden, seed=init_seed)
    for s in samples:
        s.features(cfg)
    opt = Adam(model.theta.size, tc.lr, tc.beta1, tc.beta2, tc.eps)
    trace = []
    for epoch in range(tc.epochs):
        order = rng.permutation(len(samples))
        reports = []
        for start in range(0, len(order), tc.batch_size):
            batch = [samples[i] for i in order[start : start + tc.batch_size]]
            tape = Tape()
            # overflow is reported as TrainingDiverged below, not as a warning
            with np.errstate(over="ignore", invalid="ignore"):
                rep = total_objective(batch, model, cfg, tc, rng=rng, tape=tape)
                grad = backward(model, tape) if np.isfinite(rep.total) else None
            if grad is None:
                raise TrainingDiverged(epoch)
            if not np.isfinite(grad).all():
                raise TrainingDiverged(epoch)
            opt.step(model.theta, grad)
            reports.append(rep)
        trace.append(
            EpochLoss(
                epoch,
                float(np.mean([r.rec for r in reports])),
                float(np.mean([r.eq for r in reports])),
                float(np.mean([r.total for r in reports])),
                float(tc.gamma * np.mean([r.eq for r in reports])),
            )
        )
        if epoch % 50 == 0 or epoch == tc.epochs - 1:
            log.debug("epoch %d rec %.6g eq %.6g", epoch, trace[-1].rec, trace[-1].eq)
    return model, trace


def evaluate_objective(samples, model: ToyRestorer, cfg: FeatureConfig, tc: TrainConfig, seed: int = 12345) -> LossReport:
    """Objective on held-out data with a fixed scale-draw stream (no gradients)."""
    samples = [_as_sample(s) for s in samples]
    rng = np.random.default_rng(seed)
    reports = [total_objective([s], model, cfg, tc, rng=rng) for s in samples]
    rec = float(np.mean([r.rec for r in reports]))
    eq = float(np.mean([r.eq for r in reports]))
    return LossReport(rec, eq, rec + tc.gamma * eq, [a for r in reports for a in r.alpha_samples])


__all__ = ["Adam", "EpochLoss", "Sample", "TrainingDiverged", "evaluate_objective", "train"]
