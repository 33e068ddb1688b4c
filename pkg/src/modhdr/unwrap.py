"""Closed-form least-squares unwrapping of modulo images.

Finds ``x0 = argmin ||D x - g||^2`` where ``D`` stacks the horizontal and
vertical forward differences and ``g`` is a wrapped gradient field. The normal
equations are a Poisson problem with Neumann boundaries, which the DCT
diagonalises (Ghiglia & Romero, JOSA A 1994).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .dct import dct2, idct2
from .sensor import ModuloImage, WrappedGradient, forward_differences, wrapped_diff

ORACLE_MAX_PIXELS = 4096


class Gauge(str, Enum):
    ZERO_MEAN = "zero-mean"
    ANCHOR_FIRST = "anchor-first-pixel"
    ANCHOR_VALUE = "anchor-to-value"


@dataclass(frozen=True, eq=False)
class UnwrapSolution:
    """Least-squares unwrap result.

    ``image`` is ``(H, W, C)`` and can be negative: it is only defined up to an
    additive constant per channel, which ``gauge`` pins down.
    """

    image: np.ndarray
    gauge: Gauge
    residual_norm: float
    anchor_value: float | None = None


def apply_gauge(image: np.ndarray, gauge: Gauge | str = Gauge.ZERO_MEAN, value: float | None = None) -> np.ndarray:
    """Shift each channel so the chosen gauge holds."""
    gauge = Gauge(gauge)
    if gauge is Gauge.ZERO_MEAN:
        ref = image.mean(axis=(0, 1))
        target = 0.0
    elif gauge is Gauge.ANCHOR_FIRST:
        ref = image[0, 0]
        target = 0.0
    else:
        if value is None:
            raise ValueError("anchor-to-value gauge needs a value")
        ref = image[0, 0]
        target = value
    return image - ref + target


def _residual(image: np.ndarray, g: WrappedGradient) -> float:
    dh, dv = forward_differences(image)
    return float(np.sqrt(np.sum((dh - g.dh) ** 2) + np.sum((dv - g.dv) ** 2)))


def _finish(image, g, gauge, value) -> UnwrapSolution:
    gauge = Gauge(gauge)
    image = apply_gauge(image, gauge, value)
    return UnwrapSolution(image, gauge, _residual(image, g), value if gauge is Gauge.ANCHOR_VALUE else None)


def divergence(g: WrappedGradient) -> np.ndarray:
    """``rho[i,j] = dh[i,j] - dh[i,j-1] + dv[i,j] - dv[i-1,j]``, out-of-range terms dropped."""
    rho = g.dh + g.dv
    rho[:, 1:] -= g.dh[:, :-1]
    rho[1:, :] -= g.dv[:-1, :]
    return rho


def _check_size(shape) -> None:
    if shape[0] < 2 or shape[1] < 2:
        raise ValueError(f"unwrapping needs at least 2x2 pixels, got {shape[0]}x{shape[1]}")


def solve_dct(
    g: WrappedGradient, gauge: Gauge | str = Gauge.ZERO_MEAN, anchor_value: float | None = None
) -> UnwrapSolution:
    """Integrate a gradient field with the DCT Poisson solver.

    Parameters
    ----------
    g : WrappedGradient
        Target differences, at least 2x2.
    gauge : Gauge or str
        How to fix the free additive constant.
    anchor_value : float, optional
        Value of pixel (0, 0) under the anchor-to-value gauge.
    """
    m, n, _ = g.shape
    _check_size(g.shape)
    rho = divergence(g)
    coeffs = dct2(rho)
    denom = (2 * np.cos(np.pi * np.arange(m) / m)[:, None] + 2 * np.cos(np.pi * np.arange(n) / n)[None, :] - 4)
    denom[0, 0] = 1.0
    coeffs = coeffs / denom[:, :, None]
    coeffs[0, 0] = 0.0
    return _finish(idct2(coeffs), g, gauge, anchor_value)


def difference_operator(m: int, n: int) -> sp.csr_matrix:
    """Sparse ``(2mn, mn)`` matrix of horizontal then vertical forward differences.

    Rows for the padding positions (last column / last row) are all zero so the
    output lines up with the zero-padded ``dh``/``dv`` layout.
    """
    def d1(k):
        rows = sp.diags([-np.ones(k), np.ones(k - 1)], [0, 1], shape=(k, k)).tolil()
        rows[k - 1, k - 1] = 0.0
        return rows.tocsr()

    dh = sp.kron(sp.identity(m), d1(n))
    dv = sp.kron(d1(m), sp.identity(n))
    return sp.vstack([dh, dv]).tocsr()


def solve_dense_oracle(
    g: WrappedGradient, gauge: Gauge | str = Gauge.ZERO_MEAN, anchor_value: float | None = None
) -> UnwrapSolution:
    """Reference solver: dense normal equations with the constant null space pinned.

    Solves ``(D^T D + 11^T / N) x = D^T g``; the rank-one term only acts on the
    constant vector, and ``D^T g`` is orthogonal to it, so the solution is the
    zero-mean least-squares minimiser.
    """
    m, n, c = g.shape
    _check_size(g.shape)
    if m * n > ORACLE_MAX_PIXELS:
        raise ValueError(f"dense oracle limited to {ORACLE_MAX_PIXELS} pixels, got {m * n}")
    d = difference_operator(m, n)
    normal = (d.T @ d).toarray() + np.full((m * n, m * n), 1.0 / (m * n))
    out = np.empty((m, n, c))
    for ch in range(c):
        rhs = d.T @ np.concatenate([g.dh[:, :, ch].ravel(), g.dv[:, :, ch].ravel()])
        out[:, :, ch] = np.linalg.solve(normal, rhs).reshape(m, n)
    return _finish(out, g, gauge, anchor_value)


def unwrap_exact(
    y: ModuloImage, gauge: Gauge | str = Gauge.ZERO_MEAN, anchor_value: float | None = None
) -> UnwrapSolution:
    return solve_dct(wrapped_diff(y), gauge, anchor_value)
