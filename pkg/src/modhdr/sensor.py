"""Image containers and the forward model of a cyclic-reset (modulo) sensor.

A b-bit modulo sensor resets every pixel when it reaches ``2**b``, so the
recorded value is ``x mod 2**b``. Forward differences of the recording can be
re-centred into ``[-2**(b-1), 2**(b-1)]``; when the scene's own differences
are smaller than half the threshold (the Itoh condition) the re-centred
differences equal the true ones.

Arrays are stored as ``(height, width, channels)`` float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonFiniteError(ValueError):
    """Raised when an image contains NaN or infinite values."""

    def __init__(self, index: tuple[int, ...]):
        self.index = tuple(int(i) for i in index)
        super().__init__(f"non-finite value at pixel {self.index}")


def _as_hwc(data) -> np.ndarray:
    arr = np.array(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :, None]
    elif arr.ndim == 2:
        arr = arr[:, :, None]
    elif arr.ndim != 3:
        raise ValueError(f"expected 1-3 dimensional data, got shape {arr.shape}")
    if arr.shape[2] not in (1, 3):
        raise ValueError(f"channels must be 1 or 3, got {arr.shape[2]}")
    return arr


def _check_finite(arr: np.ndarray) -> None:
    bad = ~np.isfinite(arr)
    if bad.any():
        raise NonFiniteError(np.argwhere(bad)[0])


def _check_bit_depth(b) -> int:
    if int(b) != b or b < 1:
        raise ValueError(f"bit depth must be an integer >= 1, got {b!r}")
    return int(b)


@dataclass(frozen=True, eq=False)
class HdrImage:
    """Nonnegative linear-radiance raster.

    ``data`` may be given as 1-D (a single row), 2-D (grayscale) or
    ``(H, W, C)``; it is always stored as a float64 ``(H, W, C)`` array.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = _as_hwc(self.data)
        _check_finite(arr)
        if (arr < 0).any():
            raise ValueError(f"negative radiance at pixel {tuple(np.argwhere(arr < 0)[0])}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True, eq=False)
class ModuloImage:
    """Wrapped raster with values in ``[0, 2**bit_depth)``."""

    data: np.ndarray
    bit_depth: int

    def __post_init__(self):
        b = _check_bit_depth(self.bit_depth)
        arr = _as_hwc(self.data)
        _check_finite(arr)
        if (arr < 0).any() or (arr >= 2.0**b).any():
            raise ValueError(f"modulo image values must lie in [0, {2**b})")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "bit_depth", b)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def threshold(self) -> float:
        return 2.0**self.bit_depth


@dataclass(frozen=True, eq=False)
class WrappedGradient:
    """Re-wrapped forward differences of a modulo image.

    ``dh[i, j] = y[i, j+1] - y[i, j]`` and ``dv[i, j] = y[i+1, j] - y[i, j]``,
    each re-wrapped into ``[-2**(b-1), 2**(b-1)]``. The last column of ``dh``
    and the last row of ``dv`` are zero padding.
    """

    dh: np.ndarray
    dv: np.ndarray
    bit_depth: int

    def __post_init__(self):
        b = _check_bit_depth(self.bit_depth)
        dh = _as_hwc(self.dh)
        dv = _as_hwc(self.dv)
        if dh.shape != dv.shape:
            raise ValueError(f"dh {dh.shape} and dv {dv.shape} differ in shape")
        _check_finite(dh)
        _check_finite(dv)
        half = 2.0 ** (b - 1)
        if (np.abs(dh) > half).any() or (np.abs(dv) > half).any():
            raise ValueError(f"wrapped differences must lie in [-{half}, {half}]")
        if dh[:, -1, :].any() or dv[-1, :, :].any():
            raise ValueError("padding column of dh / row of dv must be zero")
        for a in (dh, dv):
            a.setflags(write=False)
        object.__setattr__(self, "dh", dh)
        object.__setattr__(self, "dv", dv)
        object.__setattr__(self, "bit_depth", b)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dh.shape


@dataclass(frozen=True)
class ScaleTransform:
    """Exposure change ``x -> alpha * x``."""

    alpha: float

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            raise ValueError(f"alpha must be positive and finite, got {self.alpha!r}")


@dataclass
class ItohReport:
    """Outcome of :func:`itoh_satisfied`.

    Each violation is ``(axis, row, col, channel, magnitude)`` where axis is
    ``"h"`` or ``"v"`` and ``(row, col)`` is the left/top pixel of the pair.
    """

    satisfied: bool
    bit_depth: int
    violations: list[tuple[str, int, int, int, float]] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.satisfied


def _data(x) -> np.ndarray:
    if isinstance(x, (HdrImage, ModuloImage)):
        return x.data
    arr = _as_hwc(x)
    _check_finite(arr)
    return arr


def wrap_array(x: np.ndarray, b: int) -> np.ndarray:
    """``x - 2**b * floor(x / 2**b)`` elementwise, on a plain array."""
    t = 2.0**b
    out = x - t * np.floor(x / t)
    # x slightly below a multiple of t can round up to exactly t
    out[out >= t] = 0.0
    return out


def wrap(x, b: int, quantize: bool = False) -> ModuloImage:
    """Record ``x`` on a b-bit modulo sensor.

    Each channel wraps independently. With ``quantize=True`` the radiance is
    floored to an integer count before wrapping, as an ADC would report it.
    """
    b = _check_bit_depth(b)
    arr = _data(x)
    if quantize:
        arr = np.floor(arr)
    return ModuloImage(wrap_array(arr, b), b)


def scale(x: HdrImage, t: ScaleTransform | float) -> HdrImage:
    if not isinstance(t, ScaleTransform):
        t = ScaleTransform(float(t))
    return HdrImage(_data(x) * t.alpha)


def recentre(d: np.ndarray, b: int) -> np.ndarray:
    """Map differences into ``[-2**(b-1), 2**(b-1)]`` by removing multiples of ``2**b``.

    Ties (``|d| / 2**b`` exactly 0.5) round away from zero.
    """
    t = 2.0**b
    q = d / t
    return d - t * (np.sign(q) * np.floor(np.abs(q) + 0.5))


def forward_differences(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Zero-padded horizontal and vertical forward differences of ``(H, W, C)`` data."""
    dh = np.zeros_like(a)
    dv = np.zeros_like(a)
    dh[:, :-1] = a[:, 1:] - a[:, :-1]
    dv[:-1, :] = a[1:, :] - a[:-1, :]
    return dh, dv


def wrapped_diff(y: ModuloImage) -> WrappedGradient:
    dh, dv = forward_differences(y.data)
    b = y.bit_depth
    return WrappedGradient(recentre(dh, b), recentre(dv, b), b)


def itoh_satisfied(x, b: int) -> ItohReport:
    """Check ``|dx| < 2**(b-1)`` for every horizontal and vertical neighbour pair."""
    b = _check_bit_depth(b)
    arr = _data(x)
    half = 2.0 ** (b - 1)
    dh, dv = forward_differences(arr)
    violations = []
    for axis, d in (("h", dh), ("v", dv)):
        for i, j, c in np.argwhere(np.abs(d) >= half):
            violations.append((axis, int(i), int(j), int(c), float(abs(d[i, j, c]))))
    return ItohReport(not violations, b, violations)
