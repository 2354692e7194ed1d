"""Shared numeric primitives and domain types.

Matrices and vectors are plain ``numpy`` arrays; the ``as_*`` helpers validate
them at module boundaries.  Result containers are frozen dataclasses holding
read-only arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import ndtr, ndtri

P_VALUE_FLOOR = 1e-300


class PoetPfaError(Exception):
    """Base class for errors raised by this package."""


class DomainError(PoetPfaError, ValueError):
    """Argument outside the mathematical domain of a function."""


class ShapeError(PoetPfaError, ValueError):
    """Array dimensions do not agree."""


class ParameterError(PoetPfaError, ValueError):
    """A tuning parameter is out of its admissible range."""


class RankError(PoetPfaError, ValueError):
    """A matrix is too close to singular for the requested operation."""


class NumericError(PoetPfaError, ArithmeticError):
    """An iterative numeric routine failed."""


class InsufficientDataError(PoetPfaError, ValueError):
    """Too few observations."""


def _frozen(a: NDArray) -> NDArray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


# ---------------------------------------------------------------------------
# probability functions


def std_normal_cdf(x: ArrayLike) -> NDArray | float:
    """Standard normal CDF, accurate to a few ulps over the whole real line."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("std_normal_cdf requires finite input")
    out = ndtr(arr)
    return float(out) if out.ndim == 0 else out


def std_normal_quantile(alpha: ArrayLike) -> NDArray | float:
    """Inverse of :func:`std_normal_cdf` on the open interval (0, 1)."""
    arr = np.asarray(alpha, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError("std_normal_quantile requires 0 < alpha < 1")
    out = ndtri(arr)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# array validation


def as_data_matrix(values: ArrayLike) -> NDArray:
    """Validate an ``n x p`` sample matrix (rows are observations)."""
    x = np.asarray(values, dtype=float)
    if x.ndim != 2:
        raise ShapeError(f"data matrix must be 2-D, got shape {x.shape}")
    n, p = x.shape
    if n < 2:
        raise InsufficientDataError(f"need at least 2 observations, got {n}")
    if p < 1:
        raise ShapeError("data matrix has no columns")
    if not np.all(np.isfinite(x)):
        raise DomainError("data matrix contains non-finite entries")
    return x


def as_test_vector(z: ArrayLike) -> NDArray:
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise ShapeError(f"test statistics must be 1-D, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise DomainError("test statistics contain non-finite entries")
    return z


def symmetrize(m: ArrayLike) -> NDArray:
    """Return ``(m + m.T) / 2``, which is symmetric bit for bit."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def as_symmetric(m: ArrayLike, *, atol: float = 1e-10) -> NDArray:
    """Validate a square, finite, numerically symmetric matrix and return an
    exactly symmetric copy."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError("matrix contains non-finite entries")
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if m.size and np.max(np.abs(m - m.T)) > atol * scale:
        raise DomainError("matrix is not symmetric")
    return symmetrize(m)


def pack_symmetric(m: ArrayLike) -> NDArray:
    """Upper triangle (row-major) of a symmetric matrix."""
    m = as_symmetric(m)
    return m[np.triu_indices(m.shape[0])].copy()


def unpack_symmetric(packed: ArrayLike) -> NDArray:
    """Inverse of :func:`pack_symmetric`."""
    packed = np.asarray(packed, dtype=float)
    # length = p(p+1)/2
    p = int(round((np.sqrt(8 * packed.size + 1) - 1) / 2))
    if p * (p + 1) // 2 != packed.size:
        raise ShapeError(f"{packed.size} is not a triangular number")
    out = np.empty((p, p))
    iu = np.triu_indices(p)
    out[iu] = packed
    out[(iu[1], iu[0])] = packed
    return out


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class HypothesisTruth:
    """Ground truth of a simulated testing problem."""

    is_null: NDArray
    mu_star: NDArray

    def __post_init__(self):
        is_null = np.asarray(self.is_null, dtype=bool).copy()
        mu = _frozen(self.mu_star)
        if is_null.shape != mu.shape or is_null.ndim != 1:
            raise ShapeError("is_null and mu_star must be 1-D of equal length")
        if not np.array_equal(is_null, mu == 0.0):
            raise DomainError("is_null must coincide with mu_star == 0")
        is_null.flags.writeable = False
        object.__setattr__(self, "is_null", is_null)
        object.__setattr__(self, "mu_star", mu)

    @classmethod
    def from_means(cls, mu_star: ArrayLike) -> "HypothesisTruth":
        mu = np.asarray(mu_star, dtype=float)
        return cls(is_null=mu == 0.0, mu_star=mu)

    @property
    def p(self) -> int:
        return self.is_null.size

    @property
    def p0(self) -> int:
        return int(self.is_null.sum())

    @property
    def p1(self) -> int:
        return self.p - self.p0


@dataclass(frozen=True)
class FactorRepresentation:
    """Loadings ``B`` (p x k) with the derived per-row quantities used by the
    FDP formulas.

    ``row_norm_sq`` is clamped to ``[0, 1 - delta_a]`` so that the scale factors
    ``a = (1 - |b_i|^2)^(-1/2)`` stay in ``[1, 1/sqrt(delta_a)]``.
    """

    loadings: NDArray
    row_norm_sq: NDArray
    a: NDArray
    delta_a: float = 0.01

    @classmethod
    def from_loadings(cls, loadings: ArrayLike, delta_a: float = 0.01) -> "FactorRepresentation":
        b = np.asarray(loadings, dtype=float)
        if b.ndim != 2:
            raise ShapeError(f"loadings must be 2-D, got shape {b.shape}")
        if not 0.0 < delta_a <= 1.0:
            raise ParameterError("delta_a must lie in (0, 1]")
        norm_sq = np.clip(np.einsum("ij,ij->i", b, b), 0.0, 1.0 - delta_a)
        a = 1.0 / np.sqrt(1.0 - norm_sq)
        return cls(_frozen(b), _frozen(norm_sq), _frozen(a), float(delta_a))

    @classmethod
    def empty(cls, p: int) -> "FactorRepresentation":
        """No factors: ``a_i = 1`` and every factor contribution vanishes."""
        return cls.from_loadings(np.zeros((p, 0)))

    @property
    def p(self) -> int:
        return self.loadings.shape[0]

    @property
    def k(self) -> int:
        return self.loadings.shape[1]
