"""HDR quality metrics: PU21 encoding, PSNR, SSIM, MS-SSIM and Reinhard previews."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .sensor import HdrImage

REC709 = np.array([0.2126, 0.7152, 0.0722])
MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


class Pu21Encoder:
    """Perceptually uniform encoding of absolute luminance (Mantiuk & Azimi, 2021).

    Coefficients are the published ``banding_glare`` fit, transcribed from the
    reference implementation distributed with ColorVideoVDP (MIT licence).
    """

    COEFFICIENTS = {
        "banding": (1.070275272, 0.4088273932, 0.153224308, 0.2520326168, 1.063512885, 1.14115047, 521.4527484),
        "banding_glare": (
            0.353487901, 0.3734658629, 8.277049286e-05, 0.9062562627, 0.09150303166, 0.9099517204, 596.3148142,
        ),
        "peaks": (1.043882782, 0.6459495343, 0.3194584211, 0.374025247, 1.114783422, 1.095360363, 384.9217577),
        "peaks_glare": (
            816.885024, 1479.463946, 0.001253215609, 0.9329636822, 0.06746643971, 1.573435413, 419.6006374,
        ),
    }

    def __init__(self, variant: str = "banding_glare", l_min: float = 0.005, l_max: float = 10000.0):
        if variant not in self.COEFFICIENTS:
            raise ValueError(f"unknown PU21 variant {variant!r}")
        self.variant = variant
        self.p = self.COEFFICIENTS[variant]
        self.l_min = l_min
        self.l_max = l_max

    def encode(self, lum) -> np.ndarray:
        p = self.p
        y = np.clip(np.asarray(lum, dtype=np.float64), self.l_min, self.l_max) ** p[3]
        return p[6] * (((p[0] + p[1] * y) / (1 + p[2] * y)) ** p[4] - p[5])

    def peak(self, luminance: float | None = None) -> float:
        """Encoded value at ``luminance`` (default: ``l_max``)."""
        return float(self.encode(self.l_max if luminance is None else luminance))


_DEFAULT_PU21 = Pu21Encoder()


@dataclass(frozen=True)
class DisplayMap:
    """Maps scene radiance to cd/m^2 by pinning a reference percentile to ``peak_luminance``."""

    peak_luminance: float = 1000.0
    percentile: float = 99.9

    def factor(self, ref_luminance: np.ndarray) -> float:
        level = float(np.percentile(ref_luminance, self.percentile))
        return self.peak_luminance / level if level > 0 else 1.0


def pu21_encode(lum, display_map: DisplayMap | float | None = None, encoder: Pu21Encoder = _DEFAULT_PU21):
    """PU21-encode a linear luminance raster.

    ``display_map`` is either a fixed multiplier to cd/m^2 or a
    :class:`DisplayMap`, whose factor is computed from ``lum`` itself. ``None``
    means the values are already in cd/m^2.
    """
    lum = np.asarray(lum, dtype=np.float64)
    if isinstance(display_map, DisplayMap):
        lum = lum * display_map.factor(lum)
    elif display_map is not None:
        lum = lum * float(display_map)
    return encoder.encode(lum)


def _hwc(img) -> np.ndarray:
    arr = img.data if isinstance(img, HdrImage) else np.asarray(img, dtype=np.float64)
    return arr[:, :, None] if arr.ndim == 2 else arr


def luminance(img) -> np.ndarray:
    """Rec. 709 luminance of an ``(H, W, 3)`` raster, returned as ``(H, W)``."""
    arr = _hwc(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"luminance needs 3 channels, got shape {arr.shape}")
    return arr @ REC709


def _luma_or_gray(arr: np.ndarray) -> np.ndarray:
    return arr[:, :, 0] if arr.shape[2] == 1 else luminance(arr)


def psnr(ref, test, peak: float) -> float:
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {test.shape}")
    if not peak > 0:
        raise ValueError("peak must be > 0")
    mse = float(np.mean((ref - test) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


@dataclass(frozen=True)
class SsimParams:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float | None = None  # None -> max(ref) - min(ref)
    weights: tuple[float, ...] = MSSSIM_WEIGHTS


def _gaussian(n: int, sigma: float) -> np.ndarray:
    t = np.arange(n) - (n - 1) / 2
    g = np.exp(-(t**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(a: np.ndarray, g: np.ndarray) -> np.ndarray:
    n = g.size
    a = sliding_window_view(a, n, axis=0) @ g
    return sliding_window_view(a, n, axis=1) @ g


def _ssim_terms(ref, test, p: SsimParams, data_range: float):
    g = _gaussian(p.window, p.sigma)
    c1 = (p.k1 * data_range) ** 2
    c2 = (p.k2 * data_range) ** 2
    mu1 = _filter_valid(ref, g)
    mu2 = _filter_valid(test, g)
    s11 = _filter_valid(ref * ref, g) - mu1 * mu1
    s22 = _filter_valid(test * test, g) - mu2 * mu2
    s12 = _filter_valid(ref * test, g) - mu1 * mu2
    cs = (2 * s12 + c2) / (s11 + s22 + c2)
    lum = (2 * mu1 * mu2 + c1) / (mu1 * mu1 + mu2 * mu2 + c1)
    return lum, cs


def _check_pair(ref, test):
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {test.shape}")
    if ref.ndim != 2:
        raise ValueError("SSIM expects single-channel (H, W) inputs")
    return ref, test


def _range(ref, p: SsimParams) -> float:
    if p.data_range is not None:
        return float(p.data_range)
    r = float(ref.max() - ref.min())
    return r if r > 0 else 1.0


def ssim(ref, test, params: SsimParams = SsimParams()) -> float:
    """Mean SSIM with a Gaussian window over the valid region."""
    ref, test = _check_pair(ref, test)
    if min(ref.shape) < params.window:
        raise ValueError(f"image {ref.shape} smaller than the {params.window}px window")
    lum, cs = _ssim_terms(ref, test, params, _range(ref, params))
    return float(np.mean(lum * cs))


def max_scales(shape, window: int = 11) -> int:
    """Largest dyadic scale count whose coarsest level still fits the window."""
    n, side = 0, min(shape)
    while side >= window:
        n += 1
        side //= 2
    return n


def _downsample(a: np.ndarray) -> np.ndarray:
    h, w = (a.shape[0] // 2) * 2, (a.shape[1] // 2) * 2
    a = a[:h, :w]
    return 0.25 * (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2])


def msssim(ref, test, params: SsimParams = SsimParams()) -> float:
    """Multi-scale SSIM (Wang, Simoncelli & Bovik 2003).

    Contrast-structure terms are taken at every scale and the luminance term
    only at the coarsest; the number of scales equals ``len(params.weights)``.
    Between scales both images are 2x2 box-averaged. Negative per-scale terms
    are clipped at zero before the weighted geometric mean.
    """
    ref, test = _check_pair(ref, test)
    weights = np.asarray(params.weights, dtype=np.float64)
    feasible = max_scales(ref.shape, params.window)
    if len(weights) > feasible:
        raise ValueError(
            f"image {ref.shape} too small for {len(weights)} scales; at most {feasible} fit the window"
        )
    data_range = _range(ref, params)
    vals = []
    for k in range(len(weights)):
        lum, cs = _ssim_terms(ref, test, params, data_range)
        if k == len(weights) - 1:
            vals.append(float(np.mean(lum * cs)))
        else:
            vals.append(float(np.mean(cs)))
            ref, test = _downsample(ref), _downsample(test)
    vals = np.maximum(np.asarray(vals), 0.0)
    return float(np.prod(vals**weights))


@dataclass(frozen=True)
class MetricReport:
    psnr_y_pu: float
    psnr_pu: float
    ssim_y_pu: float
    msssim_y_pu: float
    psnr_l: float
    ssim_l: float

    COLUMNS = ("psnr_y_pu", "psnr_pu", "ssim_y_pu", "msssim_y_pu", "psnr_l", "ssim_l")

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate(
    ref,
    test,
    display_map: DisplayMap = DisplayMap(),
    encoder: Pu21Encoder = _DEFAULT_PU21,
    params: SsimParams = SsimParams(),
) -> MetricReport:
    """Compute the six-column HDR report for one image pair.

    The display factor is derived from the reference's luminance and applied
    to both images. PU-domain PSNRs use the encoder value at the display peak
    as their peak; SSIMs in the PU domain use the same value as data range.
    Linear PSNR uses ``max(ref)``; linear SSIM averages over channels with
    data range ``max(ref)``. MS-SSIM falls back to the largest scale count
    that fits when the image is too small for all five scales.
    """
    r, t = _hwc(ref), _hwc(test)
    if r.shape != t.shape:
        raise ValueError(f"shape mismatch: {r.shape} vs {t.shape}")
    factor = display_map.factor(_luma_or_gray(r))
    pu_peak = encoder.peak(display_map.peak_luminance)
    pu_r = encoder.encode(np.maximum(r, 0) * factor)
    pu_t = encoder.encode(np.maximum(t, 0) * factor)
    pu_ry = encoder.encode(_luma_or_gray(np.maximum(r, 0)) * factor)
    pu_ty = encoder.encode(_luma_or_gray(np.maximum(t, 0)) * factor)

    pu_params = SsimParams(params.window, params.sigma, params.k1, params.k2, pu_peak, params.weights)
    n_scales = min(len(params.weights), max_scales(pu_ry.shape, params.window))
    if n_scales < len(params.weights):
        w = np.asarray(params.weights[:n_scales])
        pu_params = SsimParams(params.window, params.sigma, params.k1, params.k2, pu_peak, tuple(w / w.sum()))

    lin_peak = float(r.max()) if r.max() > 0 else 1.0
    lin_params = SsimParams(params.window, params.sigma, params.k1, params.k2, lin_peak)
    return MetricReport(
        psnr_y_pu=psnr(pu_ry, pu_ty, pu_peak),
        psnr_pu=psnr(pu_r, pu_t, pu_peak),
        ssim_y_pu=ssim(pu_ry, pu_ty, pu_params),
        msssim_y_pu=msssim(pu_ry, pu_ty, pu_params),
        psnr_l=psnr(r, t, lin_peak),
        ssim_l=float(np.mean([ssim(r[:, :, c], t[:, :, c], lin_params) for c in range(r.shape[2])])),
    )


def reinhard_tonemap(x) -> np.ndarray:
    """Global Reinhard operator ``L / (1 + L)`` on luminance, keeping colour ratios."""
    arr = _hwc(x)
    if (arr < 0).any():
        raise ValueError("tone mapping expects nonnegative radiance")
    lum = arr[:, :, 0] if arr.shape[2] == 1 else luminance(arr)
    mapped = lum / (1.0 + lum)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(lum > 0, mapped / lum, 1.0)
    return np.clip(arr * ratio[:, :, None], 0.0, 1.0)
