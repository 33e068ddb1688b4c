import math
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from modhdr.metrics import (
    DisplayMap, Pu21Encoder, SsimParams, evaluate, luminance, max_scales, msssim, psnr,
    pu21_encode, reinhard_tonemap, ssim,
)

# measured once from the cvvdp reference implementation (pycvvdp/utils.py, PU21 banding_glare)
PU21_AT_MIN = 5.47e-10
PU21_AT_MAX = 595.393920020095
PU21_AT_1000 = 420.0969213492443


def test_pu21_reference_values():
    enc = Pu21Encoder()
    assert abs(enc.encode(0.005)) <= 1e-6
    assert abs(enc.encode(0.005) - PU21_AT_MIN) <= 1e-11
    assert enc.peak() == pytest.approx(PU21_AT_MAX, rel=1e-12)
    assert enc.peak(1000) == pytest.approx(PU21_AT_1000, rel=1e-12)


def test_pu21_clips_to_domain():
    enc = Pu21Encoder()
    assert enc.encode(0.0) == enc.encode(0.005)
    assert enc.encode(1e6) == enc.encode(1e4)
    with pytest.raises(ValueError):
        Pu21Encoder("nope")


@pytest.mark.parametrize("variant", list(Pu21Encoder.COEFFICIENTS))
def test_pu21_variants_monotone(variant):
    v = Pu21Encoder(variant).encode(np.geomspace(0.005, 1e4, 2000))
    assert (np.diff(v) > 0).all()


@given(st.floats(0.005, 1e4), st.floats(0.005, 1e4))
def test_pu21_strictly_increasing(a, b):
    if a == b:
        return
    lo, hi = min(a, b), max(a, b)
    enc = Pu21Encoder()
    assert enc.encode(lo) < enc.encode(hi)


def test_display_map_pins_percentile():
    lum = np.linspace(0, 2, 1001)
    dm = DisplayMap(1000.0, 100.0)
    assert dm.factor(lum) == 500.0
    np.testing.assert_allclose(pu21_encode(lum, dm), Pu21Encoder().encode(lum * 500.0))


@pytest.mark.parametrize("rgb,expected", [((0.3, 0.3, 0.3), 0.3), ((1, 0, 0), 0.2126), ((0, 0, 1), 0.0722)])
def test_luminance_examples(rgb, expected):
    assert luminance(np.array(rgb, float).reshape(1, 1, 3))[0, 0] == pytest.approx(expected, abs=1e-15)


def test_luminance_needs_three_channels():
    with pytest.raises(ValueError):
        luminance(np.zeros((2, 2, 1)))


def test_psnr_examples(rng):
    x = rng.uniform(size=(8, 8))
    assert psnr(x, x, 1.0) == math.inf
    assert psnr(np.zeros(4), np.ones(4), 255.0) == pytest.approx(48.1308, abs=1e-3)
    assert psnr(np.zeros(4), np.full(4, 3.0), 3.0) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        psnr(np.zeros(3), np.zeros(4), 1.0)


@given(arrays(np.float64, (6, 6), elements=st.floats(0, 100)), st.floats(0.01, 100), st.floats(1e-3, 1e3))
def test_psnr_joint_scale_invariance(ref, noise, s):
    test = ref + noise
    assert abs(psnr(s * ref, s * test, s * 200.0) - psnr(ref, test, 200.0)) <= 1e-9


def test_ssim_identity_and_noise_ordering(rng):
    x = rng.uniform(size=(32, 32))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-9)
    weak = ssim(x, x + 0.01 * rng.normal(size=x.shape))
    strong = ssim(x, x + 0.3 * rng.normal(size=x.shape))
    assert strong < weak < 1.0


def test_ssim_constant_closed_form():
    a, c = 100.0, 10.0
    p = SsimParams(data_range=255.0)
    c1 = (0.01 * 255.0) ** 2
    expected = (2 * a * (a + c) + c1) / (a * a + (a + c) ** 2 + c1)
    assert ssim(np.full((11, 11), a), np.full((11, 11), a + c), p) == pytest.approx(expected, abs=1e-12)


def test_ssim_window_matches_independent_convolution(rng):
    from scipy.signal import convolve2d
    x, y = rng.uniform(size=(20, 20)), rng.uniform(size=(20, 20))
    t = np.arange(11) - 5
    g = np.exp(-t**2 / (2 * 1.5**2))
    w = np.outer(g, g) / np.outer(g, g).sum()
    f = lambda a: convolve2d(a, w, mode="valid")  # noqa: E731
    c1, c2 = 0.01**2, 0.03**2
    mx, my = f(x), f(y)
    sxx, syy, sxy = f(x * x) - mx**2, f(y * y) - my**2, f(x * y) - mx * my
    ref = np.mean((2 * mx * my + c1) * (2 * sxy + c2) / ((mx**2 + my**2 + c1) * (sxx + syy + c2)))
    assert ssim(x, y, SsimParams(data_range=1.0)) == pytest.approx(ref, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_ssim_symmetric(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(size=(14, 13)), rng.uniform(size=(14, 13))
    p = SsimParams(data_range=1.0)
    assert abs(ssim(x, y, p) - ssim(y, x, p)) <= 1e-12


def test_msssim_single_scale_equals_ssim(rng):
    x, y = rng.uniform(size=(24, 24)), rng.uniform(size=(24, 24))
    p = SsimParams(data_range=1.0, weights=(1.0,))
    assert msssim(x, y, p) == pytest.approx(ssim(x, y, p), abs=1e-12)


def test_msssim_identity_and_size_error(rng):
    x = rng.uniform(size=(176, 176))
    assert msssim(x, x) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError, match="at most 3"):
        msssim(x[:50, :50], x[:50, :50])
    assert max_scales((176, 176)) == 5


def test_evaluate_identity_and_scaled_pair(rng):
    x = rng.uniform(0.1, 50, size=(32, 32, 3))
    r = evaluate(x, x)
    assert r.psnr_y_pu == r.psnr_pu == r.psnr_l == math.inf
    assert r.ssim_y_pu == pytest.approx(1.0, abs=1e-9) and r.ssim_l == pytest.approx(1.0, abs=1e-9)
    assert r.msssim_y_pu == pytest.approx(1.0, abs=1e-9)
    h = evaluate(x, 0.5 * x)
    expected = 10 * math.log10(x.max() ** 2 / np.mean((0.5 * x) ** 2))
    assert h.psnr_l == pytest.approx(expected, abs=1e-10)


def test_evaluate_is_bitwise_pure(rng):
    x = rng.uniform(0, 10, size=(20, 20, 3))
    y = x + rng.normal(scale=0.1, size=x.shape).clip(-x, None)
    assert evaluate(x, y) == evaluate(x.copy(), y.copy())


def test_evaluate_runtime():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 100, size=(256, 256, 3))
    y = np.abs(x + rng.normal(size=x.shape))
    t = time.perf_counter()
    evaluate(x, y)
    assert time.perf_counter() - t < 2.0


def test_reinhard_examples():
    assert reinhard_tonemap(np.array([[0.0]]))[0, 0, 0] == 0.0
    assert reinhard_tonemap(np.array([[1.0]]))[0, 0, 0] == 0.5
    np.testing.assert_array_equal(reinhard_tonemap(np.ones((1, 1, 3))), np.full((1, 1, 3), 0.5))
    with pytest.raises(ValueError):
        reinhard_tonemap(np.array([[-1.0]]))


def test_reinhard_monotone_towards_one():
    v = reinhard_tonemap(np.geomspace(1e-3, 1e6, 200)[None, :])[0, :, 0]
    assert (np.diff(v) > 0).all() and v[-1] < 1 and v[-1] > 0.999
