import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poetpfa.core import ParameterError, RankError, ShapeError
from poetpfa.eigen import (
    eigsh_perturbation_report,
    fix_signs,
    smallest_eigenvalue,
    sym_eigen,
    top_eigen,
    top_k_loadings,
)

from conftest import random_pd, random_symmetric


def check_invariants(m, es):
    v = es.eigenvectors
    assert np.all(np.diff(es.eigenvalues) <= 0)
    assert np.max(np.abs(v.T @ v - np.eye(v.shape[1]))) <= 1e-10
    assert np.linalg.norm(m - es.reconstruct()) <= 1e-8 * max(np.linalg.norm(m), 1.0)
    for j in range(v.shape[1]):
        first = np.flatnonzero(np.abs(v[:, j]) > 1e-12)[0]
        assert v[first, j] > 0


def test_identity():
    es = sym_eigen(np.eye(3))
    assert np.allclose(es.eigenvalues, 1.0)
    check_invariants(np.eye(3), es)


def test_diagonal():
    es = sym_eigen(np.diag([2.0, 5.0, -1.0]))
    assert np.allclose(es.eigenvalues, [5, 2, -1])
    assert np.allclose(np.abs(es.eigenvectors), np.eye(3)[:, [1, 0, 2]])


def test_random_reconstruction(rng):
    m = random_symmetric(rng, 6)
    es = sym_eigen(m)
    v = es.eigenvectors
    assert np.linalg.norm(m - v @ np.diag(es.eigenvalues) @ v.T) <= 1e-10
    check_invariants(m, es)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 25), st.integers(0, 2**31))
def test_invariants_property(p, seed):
    m = random_symmetric(np.random.default_rng(seed), p, scale=3.0)
    check_invariants(m, sym_eigen(m))


def test_deterministic(rng):
    m = random_symmetric(rng, 10)
    a, b = sym_eigen(m), sym_eigen(m.copy())
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    assert np.array_equal(a.eigenvectors, b.eigenvectors)


def test_top_eigen_matches_full(rng):
    m = random_pd(rng, 12)
    full, top = sym_eigen(m), top_eigen(m, 4)
    assert np.allclose(top.eigenvalues, full.eigenvalues[:4], rtol=1e-12)
    assert np.allclose(top.eigenvectors, full.eigenvectors[:, :4], atol=1e-9)
    assert top_eigen(m, 0).eigenvalues.size == 0
    with pytest.raises(ParameterError):
        top_eigen(m, 13)


def test_smallest_eigenvalue(rng):
    m = random_symmetric(rng, 7)
    assert smallest_eigenvalue(m) == pytest.approx(np.linalg.eigvalsh(m)[0], abs=1e-12)


def test_fix_signs():
    v = np.array([[0.0, -1.0], [-1.0, 0.0]])
    assert np.array_equal(fix_signs(v), [[0.0, 1.0], [1.0, 0.0]])


class TestLoadings:
    def test_identity_single(self):
        fr = top_k_loadings(sym_eigen(np.eye(4)), 1)
        col = fr.loadings[:, 0]
        assert np.linalg.norm(col) == pytest.approx(1.0)

    def test_equicorrelation(self):
        rho, p = 0.5, 3
        m = (1 - rho) * np.eye(p) + rho * np.ones((p, p))
        es = sym_eigen(m)
        assert es.eigenvalues[0] == pytest.approx(1 + (p - 1) * rho)
        fr = top_k_loadings(es, 1)
        assert np.allclose(fr.loadings[:, 0], math.sqrt(2) * np.ones(3) / math.sqrt(3))

    def test_full_rank_reconstructs(self, rng):
        m = random_pd(rng, 6)
        b = top_k_loadings(sym_eigen(m), 6).loadings
        assert np.max(np.abs(b @ b.T - m)) <= 1e-8

    def test_k_zero(self, rng):
        assert top_k_loadings(sym_eigen(random_pd(rng, 3)), 0).k == 0

    def test_non_positive_eigenvalue(self):
        with pytest.raises(RankError):
            top_k_loadings(sym_eigen(np.diag([1.0, 0.0])), 2)


class TestPerturbation:
    def test_identical(self, rng):
        m = random_symmetric(rng, 5)
        rep = eigsh_perturbation_report(m, m)
        assert rep.op_norm_diff == 0
        assert np.all(rep.eigenvalue_diffs == 0)
        assert np.all(rep.eigenvector_dists == 0)

    def test_diagonal(self):
        rep = eigsh_perturbation_report(np.diag([3.0, 1.0]), np.diag([3.5, 1.0]))
        assert rep.op_norm_diff == pytest.approx(0.5)
        assert np.allclose(rep.eigenvalue_diffs, [0.5, 0.0])

    def test_weyl_small_perturbation(self, rng):
        a = random_symmetric(rng, 8)
        rep = eigsh_perturbation_report(a, a + 1e-3 * random_symmetric(rng, 8))
        assert rep.weyl_holds().all()
        assert rep.sin_theta_holds().all()

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            eigsh_perturbation_report(np.eye(2), np.eye(3))
