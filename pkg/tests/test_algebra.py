import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import REPS, matrix_product

from nilgeo.algebra import (
    Automorphism,
    NoIsometry,
    ValidationError,
    abelianization_norm,
    asymptotic_structure,
    bracket,
    bundled_specs,
    graph_isometry,
    inverse,
    load_structure,
    multiply,
    multiply_many,
    shear_automorphism,
    structure_from_dict,
)


coords = arrays(np.float64, 6, elements=st.floats(-3, 3, allow_nan=False))


@pytest.mark.parametrize("name", sorted(REPS))
def test_representations_are_homomorphisms(name):
    S = load_structure(name)
    B = REPS[name]
    A = np.array([b.ravel() for b in B]).T
    assert np.linalg.matrix_rank(A) == S.dim
    for i in range(S.dim):
        for j in range(S.dim):
            comm = B[i] @ B[j] - B[j] @ B[i]
            e = np.zeros(S.dim)
            e[i] = 1
            f = np.zeros(S.dim)
            f[j] = 1
            expect = sum(c * b for c, b in zip(bracket(S.algebra, e, f), B))
            assert np.allclose(comm, expect)


@pytest.mark.parametrize("name", sorted(REPS))
@given(p=coords, q=coords)
def test_product_matches_matrix_group(name, p, q):
    S = load_structure(name)
    p, q = p[: S.dim], q[: S.dim]
    assert np.allclose(multiply(S.algebra, p, q), matrix_product(name, p, q), atol=1e-8, rtol=1e-8)


@pytest.mark.parametrize("name", ["heisenberg", "free23", "engel_riemannian"])
@given(p=coords, q=coords, r=coords)
def test_group_axioms(name, p, q, r):
    alg = load_structure(name).algebra
    p, q, r = p[: alg.dim], q[: alg.dim], r[: alg.dim]
    lhs = multiply(alg, multiply(alg, p, q), r)
    rhs = multiply(alg, p, multiply(alg, q, r))
    assert np.allclose(lhs, rhs, atol=1e-9)
    assert np.allclose(multiply(alg, p, inverse(alg, p)), 0.0, atol=1e-12)
    assert np.allclose(multiply_many(alg, [p, q, r]), lhs, atol=1e-9)


def test_step2_product_formula(free23):
    rng = np.random.default_rng(1)
    p, q = rng.normal(size=(2, 6))
    alg = free23.algebra
    assert np.allclose(multiply(alg, p, q), p + q + 0.5 * bracket(alg, p, q))


@given(p=coords, q=coords, lam=st.floats(0.1, 10))
def test_dilation_is_automorphism(p, q, lam):
    S = load_structure("free23")
    alg = S.algebra
    lhs = S.dilate(multiply(alg, p, q), lam)
    rhs = multiply(alg, S.dilate(p, lam), S.dilate(q, lam))
    assert np.allclose(lhs, rhs, atol=1e-8 * lam * lam)


def test_bundled_specs_load():
    names = bundled_specs()
    assert {"heisenberg.json", "heisenberg_riemannian.json", "hxr_riemannian.json", "free23.json",
            "engel_riemannian.json"} <= set(names)
    for n in names:
        S = load_structure(n)
        assert S.hash() == load_structure(n.removesuffix(".json")).hash()


def test_structure_invariants(heis, heis_r, free23):
    assert heis.is_carnot and heis.Q == 4
    assert not heis_r.is_carnot and heis_r.Q == 4
    assert free23.Q == 9 and free23.algebra.m == 3
    A = asymptotic_structure(heis_r)
    assert A.is_carnot and A.k == 2
    assert asymptotic_structure(heis) is heis


def test_hash_changes_with_metric(heis):
    d = heis.to_dict()
    d2 = json.loads(json.dumps(d))
    d2["metric"] = [2.0, 0.0, 0.0, 1.0]
    assert structure_from_dict(d).hash() == heis.hash()
    assert structure_from_dict(d2).hash() != heis.hash()


BASE = {"dim": 3, "step": 2, "basis": ["X", "Y", "Z"], "brackets": [{"i": 0, "j": 1, "coeffs": {"2": 1}}]}


@pytest.mark.parametrize("patch, message", [
    ({"brackets": [{"i": 0, "j": 1, "coeffs": {"2": 1}}, {"i": 1, "j": 2, "coeffs": {"0": 1}}]}, "nilpotent"),
    ({"brackets": [{"i": 0, "j": 0, "coeffs": {"2": 1}}]}, "must be zero"),
    ({"step": 4}, "step"),
    ({"metric": [1, 0, 0, -1], "horizontal": [0, 1]}, "positive definite"),
    ({"metric": [1, 2, 0, 1], "horizontal": [0, 1]}, "symmetric"),
    ({"horizontal": [0, 2]}, "span"),
    ({"dim": "x"}, "malformed"),
])
def test_validation_errors(patch, message):
    d = dict(BASE, **patch)
    with pytest.raises(ValidationError, match=message):
        structure_from_dict(d)


def test_jacobi_failure_is_reported():
    # [e0, [e1, e2]] = e4 while the other two Jacobi terms vanish
    d = {"dim": 5, "step": 3, "brackets": [{"i": 0, "j": 1, "coeffs": {"2": 1}},
                                          {"i": 1, "j": 2, "coeffs": {"3": 1}},
                                          {"i": 0, "j": 3, "coeffs": {"4": 1}}]}
    with pytest.raises(ValidationError, match="Jacobi identity fails on triple"):
        structure_from_dict(d)


def test_automorphism_checks(heis):
    with pytest.raises(ValidationError, match="commute"):
        Automorphism(heis.algebra, np.diag([2.0, 1.0, 1.0]))
    phi = Automorphism(heis.algebra, np.diag([2.0, 3.0, 6.0]))
    rng = np.random.default_rng(0)
    p, q = rng.normal(size=(2, 3))
    alg = heis.algebra
    assert np.allclose(phi(multiply(alg, p, q)), multiply(alg, phi(p), phi(q)))


def test_graph_isometry(heis):
    d = heis.to_dict()
    d["horizontal"] = [[1.0, 0.0, 0.5], [0.0, 1.0, -2.0]]
    S2 = structure_from_dict(d)
    phi = graph_isometry(heis, S2)
    assert np.allclose(phi.matrix[2, :2], [0.5, -2.0])
    d["metric"] = [2.0, 0.0, 0.0, 1.0]
    with pytest.raises(NoIsometry):
        graph_isometry(heis, structure_from_dict(d))


def test_shear_and_abelianization(hxr):
    phi = shear_automorphism(hxr, [[0.0, 0.0, 1.0]])
    assert phi.matrix[2, 3] == 1.0
    # the abelianization norm of the Riemannian structure is Euclidean on (X, Y, T)
    assert abelianization_norm(hxr, [3.0, 4.0, 0.0]) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        shear_automorphism(hxr, [[1.0]])
