import numpy as np
import pytest

from nilgeo.algebra import asymptotic_structure
from nilgeo.controls import endpoint_product, endpoint_step2, energy
from nilgeo.geodesics import NormalGeodesicParams, exact_distance
from nilgeo.metrics import (
    Budget,
    DistanceEstimate,
    Infeasible,
    _threads,
    asymptotic_distance,
    coordinate_degrees,
    distance,
    distance_lower,
    distance_shooting,
    distance_upper,
    geodesic_witness_control,
    parallel_map,
)

QUICK = Budget(starts=4)


@pytest.mark.parametrize("target", [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.5, -1.0, 0.7], [2.0, 1.0, -3.0]])
def test_optimizer_matches_exact_sr(heis, target):
    target = np.array(target)
    est = distance_upper(heis, target, QUICK)
    exact = exact_distance(heis, target)
    assert est.upper >= exact * (1 - 1e-9)
    assert est.upper == pytest.approx(exact, rel=1e-4)
    assert est.lower <= exact


@pytest.mark.parametrize("target", [[0.0, 0.0, 10.0], [1.0, 2.0, 8.0], [3.0, 0.0, 0.5]])
def test_optimizer_matches_exact_riemannian(heis_r, target):
    target = np.array(target)
    est = distance_upper(heis_r, target, QUICK)
    exact = exact_distance(heis_r, target)
    assert est.upper >= exact * (1 - 1e-9)
    assert est.upper == pytest.approx(exact, rel=1e-4)


def test_witness_reaches_target(free23):
    target = np.array([1.0, -0.5, 0.3, 0.4, -0.2, 0.6])
    est = distance_upper(free23, target, QUICK)
    u = geodesic_witness_control(free23, est.witness, 4097)
    assert np.allclose(endpoint_product(free23, u), target, atol=1e-6)
    assert np.sqrt(energy(free23, u)) == pytest.approx(est.upper, rel=1e-8)


def test_shooting_never_worse(free23):
    target = np.array([0.2, 0.1, -0.3, 1.0, 0.5, -0.7])
    warm = distance_upper(free23, target, QUICK)
    shot = distance_shooting(free23, target, QUICK, warm=warm)
    assert shot.upper <= warm.upper
    if isinstance(shot.witness, NormalGeodesicParams):
        u = geodesic_witness_control(free23, shot.witness, 4097)
        assert np.allclose(endpoint_step2(free23, u), target, atol=1e-8)
    assert shot.upper == pytest.approx(warm.upper, rel=1e-4)


def test_distance_prefers_exact(hxr, free23):
    est = distance(hxr, np.array([1.0, 0.0, 2.0, 1.0]))
    assert est.methods == ("exact",)
    assert est.lower <= est.extra["value"] <= est.upper
    est = distance(free23, np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0]), QUICK)
    assert "optimizer" in est.methods


def test_free23_vertical_matches_heisenberg(free23):
    # the plane (X1, X2, Y12) is a totally geodesic copy of the Heisenberg group
    est = distance(free23, np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0]), QUICK)
    assert est.upper == pytest.approx(2 * np.sqrt(np.pi), rel=1e-4)


def test_seed_determinism(heis):
    t = np.array([0.3, 0.2, 0.9])
    a = distance_upper(heis, t, Budget(starts=3, seed=5))
    b = distance_upper(heis, t, Budget(starts=3, seed=5, threads=3))
    assert a.upper == b.upper and np.array_equal(a.witness.coefficients, b.witness.coefficients)


def test_infeasible_is_reported(heis):
    # constant controls cannot reach the vertical axis
    with pytest.raises(Infeasible) as err:
        distance_upper(heis, np.array([0.0, 0.0, 1.0]), Budget(n_max=0, starts=2, stages=2))
    assert err.value.best_residual > 1e-3


def test_engel_straight_line_bound(engel):
    n = 16
    p = np.array([0.0, n, 0.0, -np.sqrt(n)])
    est = distance_upper(engel, p, QUICK)
    assert est.upper <= np.sqrt(n * n + n) * (1 + 1e-9)
    assert est.lower == pytest.approx(n)
    assert coordinate_degrees(engel.algebra).tolist() == [1, 1, 2, 3]


def test_asymptotic_distance(heis_r):
    est = asymptotic_distance(heis_r, np.array([0.0, 0.0, 1.0]), use_exact=True)
    assert est.upper == pytest.approx(2 * np.sqrt(np.pi), rel=1e-8)
    assert asymptotic_structure(heis_r).k == 2


def test_lower_bound_and_estimate_contract(hxr):
    assert distance_lower(hxr, np.array([3.0, 4.0, 100.0, 12.0])) == pytest.approx(13.0)
    with pytest.raises(ValueError):
        DistanceEstimate(2.0, 1.0, np.zeros(3))


def test_threads(monkeypatch):
    monkeypatch.setenv("NILGEO_THREADS", "3")
    assert _threads(Budget()) == 3
    assert _threads(Budget(threads=2)) == 2
    assert parallel_map(lambda x: x * x, range(5), 3) == [0, 1, 4, 9, 16]
