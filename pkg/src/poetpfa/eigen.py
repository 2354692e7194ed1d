"""Symmetric eigendecomposition with a reproducible ordering and sign, loading
extraction, and perturbation diagnostics (Weyl and sin-theta bounds)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from .core import FactorRepresentation, NumericError, ParameterError, RankError, ShapeError, as_symmetric

SIGN_TOL = 1e-12


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues in non-increasing order and matching orthonormal columns."""

    eigenvalues: NDArray
    eigenvectors: NDArray

    @property
    def p(self) -> int:
        return self.eigenvectors.shape[0]

    def reconstruct(self) -> NDArray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def fix_signs(vectors: NDArray) -> NDArray:
    """Flip columns so the first entry with magnitude above ``SIGN_TOL`` is
    positive."""
    v = np.array(vectors, dtype=float, copy=True)
    if v.size == 0:
        return v
    significant = np.abs(v) > SIGN_TOL
    first = np.argmax(significant, axis=0)
    lead = v[first, np.arange(v.shape[1])]
    v[:, lead < 0] *= -1.0
    return v


def _freeze(values: NDArray, vectors: NDArray) -> EigenSystem:
    values = np.ascontiguousarray(values, dtype=float)
    vectors = np.ascontiguousarray(vectors, dtype=float)
    values.flags.writeable = False
    vectors.flags.writeable = False
    return EigenSystem(values, vectors)


def sym_eigen(m: ArrayLike) -> EigenSystem:
    """Full spectral decomposition of a symmetric matrix.

    Backed by LAPACK's Householder tridiagonalisation with implicit QL/QR
    iteration; raises :class:`NumericError` if that iteration fails.
    """
    m = as_symmetric(m)
    try:
        w, v = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"symmetric eigensolver did not converge: {exc}") from exc
    return _freeze(w[::-1], fix_signs(v[:, ::-1]))


def top_eigen(m: ArrayLike, k: int) -> EigenSystem:
    """Leading ``k`` eigenpairs only (same conventions as :func:`sym_eigen`).

    Cheaper than the full decomposition when ``k`` is much smaller than the
    dimension, which is the common case for factor loadings.
    """
    m = as_symmetric(m)
    p = m.shape[0]
    if not 0 <= k <= p:
        raise ParameterError(f"k must be in [0, {p}], got {k}")
    if k == 0:
        return _freeze(np.zeros(0), np.zeros((p, 0)))
    try:
        w, v = scipy.linalg.eigh(m, subset_by_index=[p - k, p - 1])
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"symmetric eigensolver did not converge: {exc}") from exc
    return _freeze(w[::-1], fix_signs(v[:, ::-1]))


def smallest_eigenvalue(m: ArrayLike) -> float:
    m = np.asarray(m, dtype=float)
    p = m.shape[0]
    return float(scipy.linalg.eigh(m, eigvals_only=True, subset_by_index=[0, 0])[0]) if p else np.inf


def top_k_loadings(es: EigenSystem, k: int, delta_a: float = 0.01) -> FactorRepresentation:
    """Unnormalised principal components ``B = (sqrt(l_1) g_1, ..., sqrt(l_k) g_k)``.

    ``k = 0`` is accepted and yields the empty representation.
    """
    p = es.p
    if not 0 <= k <= es.eigenvalues.size:
        raise ParameterError(f"k must be in [0, {es.eigenvalues.size}], got {k}")
    if k and es.eigenvalues[k - 1] <= 0:
        raise RankError(f"eigenvalue {k} is {es.eigenvalues[k - 1]:.3g}; cannot take its square root")
    if k == 0:
        return FactorRepresentation.empty(p)
    b = es.eigenvectors[:, :k] * np.sqrt(es.eigenvalues[:k])
    return FactorRepresentation.from_loadings(b, delta_a=delta_a)


@dataclass(frozen=True)
class PerturbationReport:
    """Weyl and sin-theta quantities comparing a reference matrix ``a`` with a
    perturbed estimate ``b``."""

    op_norm_diff: float
    eigenvalue_diffs: NDArray
    sin_theta_bounds: NDArray
    eigenvector_dists: NDArray

    def weyl_holds(self, rtol: float = 1e-10) -> NDArray:
        return self.eigenvalue_diffs <= self.op_norm_diff * (1 + rtol) + rtol

    def sin_theta_holds(self, rtol: float = 1e-10) -> NDArray:
        return self.eigenvector_dists <= self.sin_theta_bounds * (1 + rtol) + rtol


def eigsh_perturbation_report(a: ArrayLike, b: ArrayLike) -> PerturbationReport:
    """Compare the spectra of ``a`` (reference) and ``b`` (estimate).

    The per-index eigenvector bound is
    ``sqrt(2) |a - b| / min(|lb[i-1] - la[i]|, |la[i] - lb[i+1]|)``
    with out-of-range neighbours treated as infinitely far away.  Eigenvector
    distances are measured after aligning the sign of each estimated vector.
    """
    a = as_symmetric(a)
    b = as_symmetric(b)
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")
    ea, eb = sym_eigen(a), sym_eigen(b)
    diff = np.linalg.eigvalsh(a - b)
    op_norm = float(np.max(np.abs(diff))) if diff.size else 0.0

    la, lb = ea.eigenvalues, eb.eigenvalues
    above = np.concatenate(([np.inf], lb[:-1]))
    below = np.concatenate((lb[1:], [-np.inf]))
    gap = np.minimum(np.abs(above - la), np.abs(la - below))
    with np.errstate(divide="ignore", invalid="ignore"):
        bounds = np.where(gap > 0, np.sqrt(2.0) * op_norm / gap, np.inf)
    bounds = np.where((op_norm == 0) & (gap == 0), 0.0, bounds)

    dots = np.einsum("ij,ij->j", ea.eigenvectors, eb.eigenvectors)
    aligned = eb.eigenvectors * np.where(dots < 0, -1.0, 1.0)
    dists = np.linalg.norm(aligned - ea.eigenvectors, axis=0)
    return PerturbationReport(op_norm, np.abs(la - lb), bounds, dists)
