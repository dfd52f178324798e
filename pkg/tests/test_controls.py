import json

import numpy as np
import pytest
from conftest import smooth_control
from hypothesis import given
from hypothesis import strategies as st
from oracles import ode_endpoint

from nilgeo.algebra import inverse, load_structure, multiply
from nilgeo.controls import (
    FourierControl,
    SampledControl,
    concat,
    control_from_json,
    cumulative_simpson,
    dump_control,
    endpoint_product,
    endpoint_step2,
    energy,
    fourier_endpoint_complex,
    fourier_real_endpoint,
    fourier_to_sampled,
    horizontal_split,
    integrate,
    l2_inner,
    length,
    resample,
    simpson_weights,
)


def circle(N=1025):
    return SampledControl.from_function(lambda t: np.stack([np.cos(2 * np.pi * t), np.sin(2 * np.pi * t)], -1), N)


def test_circle_endpoint(heis):
    # unit-speed loop enclosing area 1/(4 pi)
    u = circle()
    assert np.allclose(endpoint_step2(heis, u), [0, 0, 1 / (4 * np.pi)], atol=1e-12)
    assert np.allclose(endpoint_product(heis, u), [0, 0, 1 / (4 * np.pi)], atol=1e-12)
    assert energy(heis, u) == pytest.approx(1.0, abs=1e-12)
    assert length(heis, u) == pytest.approx(1.0, abs=1e-12)


def test_constant_control_is_exponential(free23):
    c = np.array([1.0, -2.0, 0.5])
    u = SampledControl.constant(c, 5)
    assert np.allclose(endpoint_step2(free23, u), free23.to_algebra(c))
    assert np.allclose(endpoint_product(free23, u), free23.to_algebra(c))


@pytest.mark.parametrize("name", ["heisenberg", "free23", "engel_riemannian"])
def test_endpoint_matches_ode(name):
    S = load_structure(name)
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(2, S.k))

    def f(t):
        return a * np.cos(3 * t) + b * t * t

    u = SampledControl.from_function(lambda t: np.cos(3 * t)[:, None] * a + (t * t)[:, None] * b, 1025)
    ref = ode_endpoint(name, S, f)
    assert np.allclose(endpoint_product(S, u), ref, atol=1e-10)
    if S.step == 2:
        assert np.allclose(endpoint_step2(S, u), ref, atol=1e-10)


def test_magnus_is_fourth_order(free23):
    rng = np.random.default_rng(0)
    vals = smooth_control(rng, 3, 4097)
    fine = endpoint_product(free23, SampledControl(vals))
    errs = []
    for step in (64, 32):
        coarse = SampledControl(vals[::step])
        errs.append(np.abs(endpoint_product(free23, coarse) - fine).max())
    assert errs[0] / errs[1] > 12.0
    euler = np.abs(endpoint_product(free23, SampledControl(vals[::32]), scheme="euler") - fine).max()
    assert euler > 100 * errs[1]


@given(seed=st.integers(0, 10**6))
def test_step2_and_product_agree(seed):
    S = load_structure("free23")
    u = SampledControl(smooth_control(np.random.default_rng(seed), 3, 1025))
    assert np.allclose(endpoint_step2(S, u), endpoint_product(S, u), atol=1e-8)


def test_simpson_exact_on_cubics():
    t = np.linspace(0, 1, 9)
    f = 1 + t - 2 * t**2 + 4 * t**3
    F = t + t**2 / 2 - 2 * t**3 / 3 + t**4
    assert simpson_weights(9, 1 / 8) @ f == pytest.approx(F[-1], abs=1e-14)
    assert np.allclose(cumulative_simpson(f, 1 / 8)[::2], F[::2], atol=1e-14)


def test_concat_and_reverse(heis):
    rng = np.random.default_rng(4)
    u = SampledControl(smooth_control(rng, 2, 513))
    v = SampledControl(smooth_control(rng, 2, 513))
    alg = heis.algebra
    w = concat(u, v)
    assert w.N == 1025 and w.breaks == (512,)
    expect = multiply(alg, endpoint_step2(heis, u), endpoint_step2(heis, v))
    assert np.allclose(endpoint_step2(heis, w), expect, atol=1e-12)
    assert np.allclose(endpoint_product(heis, w), expect, atol=1e-9)
    assert np.allclose(endpoint_step2(heis, u.reversed()), inverse(alg, endpoint_step2(heis, u)), atol=1e-12)
    # energy of the concatenation doubles the sum
    assert energy(heis, w) == pytest.approx(2 * (energy(heis, u) + energy(heis, v)))
    assert np.allclose(endpoint_step2(heis, w.reversed()), inverse(alg, expect), atol=1e-12)


def test_json_roundtrip(heis):
    u = concat(circle(65), circle(65))
    back = control_from_json(json.loads(dump_control(u)))
    assert back.breaks == u.breaks and np.array_equal(back.values, u.values) and np.array_equal(back.right, u.right)
    f = FourierControl({1: [1 + 2j, 0.5], 3: [0, -1j]})
    g = control_from_json(json.loads(dump_control(f)))
    assert g.support == [1, 3] and np.allclose(g.coefficients[1], [1 + 2j, 0.5])


def test_sampled_validation():
    with pytest.raises(ValueError, match="odd"):
        SampledControl(np.zeros((4, 2)))
    with pytest.raises(ValueError, match="finite"):
        SampledControl(np.full((5, 2), np.nan))
    with pytest.raises(ValueError, match="breaks"):
        SampledControl(np.zeros((5, 2)), (1,), np.zeros((1, 2)))


def test_fourier_closed_forms(free23):
    rng = np.random.default_rng(5)
    coeffs = {int(n): rng.normal(size=3) + 1j * rng.normal(size=3) for n in rng.choice(np.arange(1, 9), 4, replace=False)}
    v = FourierControl(coeffs)
    end, en = fourier_real_endpoint(free23, v)
    u = fourier_to_sampled(v, 4097)
    assert np.allclose(endpoint_step2(free23, u), end, atol=1e-10)
    assert energy(free23, u) == pytest.approx(en, rel=1e-10)
    sym = v.real_form_coefficients()
    end2, en2 = fourier_endpoint_complex(free23, sym)
    assert np.allclose(end2.imag, 0, atol=1e-14) and np.allclose(end2.real, end, atol=1e-14)
    assert en2 == pytest.approx(en, rel=1e-12)
    with pytest.raises(ValueError):
        fourier_endpoint_complex(free23, FourierControl({0: [1, 0, 0]}))


def test_resample_and_inner(heis):
    u = circle(257)
    r = resample(u, 1025)
    assert np.allclose(r.values, circle(1025).values, atol=1e-8)
    v = SampledControl.from_function(lambda t: np.stack([np.sin(2 * np.pi * t), -np.cos(2 * np.pi * t)], -1), 257)
    assert l2_inner(heis, u, v) == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(integrate(u), 0.0, atol=1e-14)


def test_horizontal_split(heis_r):
    u = SampledControl.constant([1.0, 2.0, 3.0], 9)
    inf, drift = horizontal_split(heis_r, u)
    assert np.allclose(inf.values[0], [1, 2, 0]) and np.allclose(drift.values[0], [0, 0, 3])
    assert l2_inner(heis_r, inf, drift) == pytest.approx(0.0)
