import numpy as np
import pytest
import scipy.fft
from hypothesis import given
from hypothesis import strategies as st

from modhdr.dct import dct2, idct2
from modhdr.scenes import SceneSpec, generate
from modhdr.sensor import ModuloImage, WrappedGradient, forward_differences, wrap, wrapped_diff
from modhdr.unwrap import Gauge, solve_dct, solve_dense_oracle, unwrap_exact


def gradient_of(x, b=30):
    dh, dv = forward_differences(x[:, :, None] if x.ndim == 2 else x)
    return WrappedGradient(dh, dv, b)


def random_wrapped_gradient(rng, m, n, b=3, c=1):
    y = rng.uniform(0, 2.0**b, size=(m, n, c))
    return wrapped_diff(ModuloImage(y, b))


def rel_l2(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


@pytest.mark.parametrize("shape", [(4, 4), (5, 7), (8, 3, 3)])
def test_dct_matches_scipy(rng, shape):
    a = rng.normal(size=shape)
    ref = scipy.fft.dctn(a, type=2, norm="ortho", axes=(0, 1))
    np.testing.assert_allclose(dct2(a), ref, atol=1e-12)
    np.testing.assert_allclose(idct2(ref), a, atol=1e-12)


def test_ramp_recovered_up_to_mean():
    i, j = np.meshgrid(np.arange(4.0), np.arange(4.0), indexing="ij")
    ramp = 0.5 * (i + j)
    sol = solve_dct(gradient_of(ramp, 3))
    assert np.abs(sol.image[:, :, 0] - (ramp - ramp.mean())).max() <= 1e-8
    oracle = solve_dense_oracle(gradient_of(ramp, 3))
    assert rel_l2(sol.image, oracle.image) <= 1e-8


def test_zero_gradient_gives_zero_image():
    z = np.zeros((8, 8, 1))
    sol = solve_dct(WrappedGradient(z, z, 4))
    assert not sol.image.any() and sol.residual_norm == 0.0


def test_two_by_two_hand_solution():
    dh = np.array([[1.0, 0.0], [1.0, 0.0]])[:, :, None]
    dv = np.array([[1.0, 1.0], [0.0, 0.0]])[:, :, None]
    g = WrappedGradient(dh, dv, 3)
    expected = np.array([[-1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(solve_dense_oracle(g).image[:, :, 0], expected, atol=1e-12)
    np.testing.assert_allclose(solve_dct(g).image[:, :, 0], expected, atol=1e-12)


@pytest.mark.parametrize("shape", [(1, 5), (5, 1)])
def test_degenerate_sizes_rejected(shape):
    z = np.zeros(shape + (1,))
    g = WrappedGradient(z, z, 2)
    with pytest.raises(ValueError):
        solve_dct(g)
    with pytest.raises(ValueError):
        solve_dense_oracle(g)


def test_oracle_size_limit():
    z = np.zeros((65, 64, 1))
    with pytest.raises(ValueError):
        solve_dense_oracle(WrappedGradient(z, z, 2))


@pytest.mark.parametrize("shape", [(6, 6), (8, 8), (5, 9)])
def test_itoh_violating_input_matches_oracle(rng, shape):
    for _ in range(5):
        g = random_wrapped_gradient(rng, *shape)
        assert rel_l2(solve_dct(g).image, solve_dense_oracle(g).image) <= 1e-8


def test_colour_channels_solved_independently(rng):
    g = random_wrapped_gradient(rng, 6, 7, c=3)
    sol = solve_dct(g)
    for c in range(3):
        gc = WrappedGradient(g.dh[:, :, c:c + 1], g.dv[:, :, c:c + 1], g.bit_depth)
        np.testing.assert_allclose(sol.image[:, :, c:c + 1], solve_dct(gc).image, atol=1e-12)


def test_unwrap_exact_recovers_enforced_scene():
    x = generate(SceneSpec("gaussian-blobs", (24, 24), 1, 3.0, 4, seed=5, itoh_mode="enforce"))
    sol = unwrap_exact(wrap(x, 4))
    est = sol.image + (x.data.mean() - sol.image.mean())
    assert np.abs(est - x.data).max() <= 1e-6
    assert sol.residual_norm <= 1e-8


def test_constant_modulo_image_gives_constant():
    sol = unwrap_exact(ModuloImage(np.full((5, 6), 2.5), 3))
    assert np.ptp(sol.image) == 0.0


def test_ramp_crossing_threshold_has_no_jump():
    ramp = np.tile(np.linspace(0, 40, 20), (10, 1))  # crosses 2^4 twice
    sol = unwrap_exact(wrap(ramp, 4))
    assert sol.residual_norm <= 1e-8
    assert np.abs(np.diff(sol.image[:, :, 0], axis=1) - 40 / 19).max() <= 1e-9


def test_gauges():
    x = np.arange(12.0).reshape(3, 4)
    g = gradient_of(x)
    assert abs(solve_dct(g, Gauge.ZERO_MEAN).image.mean()) < 1e-12
    assert solve_dct(g, "anchor-first-pixel").image[0, 0, 0] == 0.0
    sol = solve_dct(g, Gauge.ANCHOR_VALUE, anchor_value=7.0)
    assert sol.image[0, 0, 0] == 7.0 and sol.anchor_value == 7.0
    np.testing.assert_allclose(sol.image[:, :, 0], x + 7.0, atol=1e-10)
    with pytest.raises(ValueError):
        solve_dct(g, Gauge.ANCHOR_VALUE)


@given(st.integers(2, 8), st.integers(2, 8), st.integers(0, 2**32 - 1), st.floats(-50, 50))
def test_gauge_does_not_change_residual(m, n, seed, value):
    g = random_wrapped_gradient(np.random.default_rng(seed), m, n)
    r0 = solve_dct(g).residual_norm
    assert abs(solve_dct(g, Gauge.ANCHOR_FIRST).residual_norm - r0) <= 1e-9 * max(1, r0)
    assert abs(solve_dct(g, Gauge.ANCHOR_VALUE, value).residual_norm - r0) <= 1e-9 * max(1, r0)


@given(st.integers(2, 8), st.integers(2, 8), st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_solver_is_linear(m, n, seed, a, c):
    rng = np.random.default_rng(seed)
    d1 = [rng.normal(size=(m, n, 1)) for _ in range(2)]
    d2 = [rng.normal(size=(m, n, 1)) for _ in range(2)]
    for pair in (d1, d2):
        pair[0][:, -1] = 0
        pair[1][-1, :] = 0
    g1, g2 = WrappedGradient(*d1, 30), WrappedGradient(*d2, 30)
    combo = WrappedGradient(a * d1[0] + c * d2[0], a * d1[1] + c * d2[1], 30)
    lhs = solve_dct(combo).image
    rhs = a * solve_dct(g1).image + c * solve_dct(g2).image
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


@given(st.integers(2, 10), st.integers(2, 10), st.integers(0, 2**32 - 1))
def test_dct_equals_oracle_property(m, n, seed):
    g = random_wrapped_gradient(np.random.default_rng(seed), m, n)
    a, o = solve_dct(g).image, solve_dense_oracle(g).image
    assert np.linalg.norm(a - o) <= 1e-8 * max(np.linalg.norm(o), 1e-12)
