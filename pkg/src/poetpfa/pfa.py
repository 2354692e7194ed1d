"""False discovery proportion estimation by principal factor approximation.

Test statistics are modelled as ``Z = mu* + B W + K`` with ``B`` the leading
unnormalised principal components of the (correlation-scaled) covariance.
Given loadings and an estimate of the realised factors ``W``, the expected
number of false discoveries at p-value threshold ``t`` is

    V(t) = sum_i Phi(a_i (z_{t/2} + b_i^T W)) + Phi(a_i (z_{t/2} - b_i^T W))

with ``a_i = (1 - |b_i|^2)^{-1/2}`` and ``z_{t/2}`` the lower ``t/2`` normal
quantile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np
import scipy.optimize
import scipy.sparse
from numpy.typing import ArrayLike, NDArray

from .core import (
    P_VALUE_FLOOR,
    FactorRepresentation,
    HypothesisTruth,
    ParameterError,
    RankError,
    ShapeError,
    as_test_vector,
    std_normal_cdf,
    std_normal_quantile,
)
from .eigen import top_eigen, top_k_loadings
from .poet import threshold_values, to_correlation

Method = Literal["ls", "lad", "soft", "hard", "scad"]
METHODS = ("ls", "lad", "soft", "hard", "scad")

LAD_MAX_ITER = 100
LAD_TOL = 1e-8
LAD_WEIGHT_FLOOR = 1e-6
PENALIZED_MAX_ITER = 200
PENALIZED_TOL = 1e-10
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class FactorRealization:
    w: NDArray
    method: str
    iterations: int = 0
    converged: bool = True
    objective: float = float("nan")


@dataclass(frozen=True)
class FdpReport:
    """One row per threshold.  Ground-truth columns are ``None`` unless a
    :class:`HypothesisTruth` was supplied."""

    t: NDArray
    R: NDArray
    V_hat: NDArray
    fdp_hat: NDArray
    V_true: Optional[NDArray] = None
    fdp_true: Optional[NDArray] = None
    fdp_oracle: Optional[NDArray] = None

    @property
    def fdp_hat_capped(self) -> NDArray:
        return np.minimum(self.fdp_hat, 1.0)

    def columns(self) -> dict[str, NDArray]:
        cols = {
            "t": self.t,
            "R": self.R,
            "V_hat": self.V_hat,
            "fdp_hat": self.fdp_hat,
            "fdp_hat_capped": self.fdp_hat_capped,
        }
        for name in ("V_true", "fdp_true", "fdp_oracle"):
            value = getattr(self, name)
            if value is not None:
                cols[name] = value
        return cols


def _ratio(num: float, den: float) -> float:
    # 0/0 = 0
    return 0.0 if den == 0 else num / den


def _check_t(t: float) -> float:
    t = float(t)
    if not 0.0 < t < 1.0:
        raise ParameterError(f"threshold t must lie in (0, 1), got {t}")
    return t


def _w_vector(fr: FactorRepresentation, w) -> NDArray:
    vec = np.asarray(w.w if isinstance(w, FactorRealization) else w, dtype=float).reshape(-1)
    if vec.size != fr.k:
        raise ShapeError(f"factor vector has length {vec.size}, loadings have k={fr.k}")
    return vec


# ---------------------------------------------------------------------------
# p-values and counts


def pvalues(z: ArrayLike) -> NDArray:
    """Two-sided normal p-values ``2 Phi(-|z|)``, floored at 1e-300."""
    z = as_test_vector(z)
    return np.clip(2.0 * std_normal_cdf(-np.abs(z)), P_VALUE_FLOOR, 1.0)


def rejection_counts(p: ArrayLike, t: float, truth: HypothesisTruth | None = None) -> tuple[int, Optional[int]]:
    """``R(t) = #{p_j <= t}`` and, with ground truth, the number of true nulls
    among the rejections."""
    t = _check_t(t)
    p = np.asarray(p, dtype=float)
    rejected = p <= t
    R = int(np.count_nonzero(rejected))
    if truth is None:
        return R, None
    if truth.p != p.size:
        raise ShapeError("truth and p-values differ in length")
    return R, int(np.count_nonzero(rejected & truth.is_null))


# ---------------------------------------------------------------------------
# realised factors


def estimate_w_least_squares(fr: FactorRepresentation, z: ArrayLike) -> FactorRealization:
    """``W = (B^T B)^{-1} B^T Z``."""
    z = as_test_vector(z)
    if z.size != fr.p:
        raise ShapeError(f"z has length {z.size}, loadings have p={fr.p}")
    b = fr.loadings
    if fr.k == 0:
        return FactorRealization(np.zeros(0), "ls", 0, True, float(z @ z))
    gram = b.T @ b
    if np.linalg.cond(gram) > MAX_CONDITION:
        raise RankError("B^T B is numerically singular")
    w = np.linalg.solve(gram, b.T @ z)
    r = z - b @ w
    return FactorRealization(w, "ls", 1, True, float(r @ r))


def _lad_objective(b: NDArray, z: NDArray, w: NDArray) -> float:
    return float(np.sum(np.abs(z - b @ w)))


def estimate_w_lad(fr: FactorRepresentation, z: ArrayLike, *, max_iter: int = LAD_MAX_ITER, tol: float = LAD_TOL) -> FactorRealization:
    """Minimise ``sum_i |z_i - b_i^T W|`` by iteratively reweighted least squares.

    Starts from the least-squares fit and returns the best iterate seen, so the
    result is never worse than least squares under the absolute loss.  If the
    iteration cap is hit first, the problem is re-solved as a linear program
    and the better of the two fits is kept.
    """
    z = as_test_vector(z)
    if fr.k < 1:
        raise ParameterError("LAD needs at least one factor")
    if fr.p <= fr.k:
        raise ParameterError("LAD needs p > k")
    b = fr.loadings
    w = estimate_w_least_squares(fr, z).w
    obj = _lad_objective(b, z, w)
    best_w, best_obj = w, obj
    converged = obj == 0.0
    it = 0
    while not converged and it < max_iter:
        it += 1
        weights = 1.0 / np.maximum(np.abs(z - b @ w), LAD_WEIGHT_FLOOR)
        bw = b * weights[:, None]
        try:
            w = np.linalg.solve(b.T @ bw, bw.T @ z)
        except np.linalg.LinAlgError:
            break
        new_obj = _lad_objective(b, z, w)
        if new_obj < best_obj:
            best_w, best_obj = w, new_obj
        converged = abs(obj - new_obj) <= tol * max(new_obj, 1e-300)
        obj = new_obj
    if not converged:
        # IRLS can stall near a vertex of the L1 objective; solve the LP instead
        lp_w = _lad_linprog(b, z)
        if lp_w is not None:
            lp_obj = _lad_objective(b, z, lp_w)
            if lp_obj <= best_obj:
                return FactorRealization(lp_w, "lad", it, True, lp_obj)
    return FactorRealization(best_w, "lad", it, bool(converged), best_obj)


def _lad_linprog(b: NDArray, z: NDArray) -> NDArray | None:
    """Exact LAD fit: minimise ``sum(e+ + e-)`` subject to ``B W + e+ - e- = z``."""
    p, k = b.shape
    eye = scipy.sparse.identity(p, format="csr")
    a_eq = scipy.sparse.hstack([scipy.sparse.csr_matrix(b), eye, -eye], format="csr")
    cost = np.concatenate([np.zeros(k), np.ones(2 * p)])
    bounds = [(None, None)] * k + [(0, None)] * (2 * p)
    res = scipy.optimize.linprog(cost, A_eq=a_eq, b_eq=z, bounds=bounds, method="highs")
    if res.status != 0:
        return None
    return np.asarray(res.x[:k])


def penalty_threshold(r: NDArray, lam: float, penalty: str) -> NDArray:
    """Minimiser over ``mu`` of ``(r - mu)^2 / 2 + p_lam(|mu|)`` for the soft
    (L1), hard and SCAD penalties."""
    if penalty not in ("soft", "hard", "scad"):
        raise ParameterError(f"unknown penalty {penalty!r}")
    if penalty == "hard":
        return np.where(np.abs(r) > lam, r, 0.0)
    return threshold_values(r, lam, penalty)


def huber_objective(b: NDArray, z: NDArray, w: NDArray, lam: float) -> float:
    """Profile of the L1-penalised problem: Huber loss with knot ``lam``."""
    r = np.abs(z - b @ w)
    return float(np.sum(np.where(r <= lam, 0.5 * r * r, lam * r - 0.5 * lam * lam)))


def default_lambda(p: int) -> float:
    return math.sqrt(2.0 * math.log(max(p, 2)))


def estimate_w_penalized(
    fr: FactorRepresentation,
    z: ArrayLike,
    penalty: str = "scad",
    lam: float | None = None,
    *,
    max_iter: int = PENALIZED_MAX_ITER,
    tol: float = PENALIZED_TOL,
) -> tuple[FactorRealization, NDArray]:
    """Jointly fit ``W`` and sparse means ``mu*`` for
    ``(1/2) sum (z_i - mu_i - b_i^T W)^2 + sum p_lam(|mu_i|)``
    by alternating exact updates, starting from ``mu* = 0``."""
    z = as_test_vector(z)
    if lam is None:
        lam = default_lambda(fr.p)
    if not lam >= 0:
        raise ParameterError("lambda must be >= 0")
    b = fr.loadings
    ls = estimate_w_least_squares(fr, z)
    w = ls.w
    mu = np.zeros_like(z)
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        mu_new = penalty_threshold(z - b @ w, lam, penalty)
        w_new = estimate_w_least_squares(fr, z - mu_new).w if fr.k else w
        step = np.max(np.abs(w_new - w)) if w.size else 0.0
        same_support = np.array_equal(mu_new != 0, mu != 0)
        w, mu = w_new, mu_new
        if step <= tol * (1.0 + np.max(np.abs(w), initial=0.0)) and same_support:
            converged = True
            break
    obj = huber_objective(b, z, w, lam) if penalty == "soft" else float("nan")
    return FactorRealization(w, penalty, it, converged, obj), mu


def estimate_w(fr: FactorRepresentation, z: ArrayLike, method: Method = "ls", lam: float | None = None) -> FactorRealization:
    """Dispatch on ``method``: ``ls``, ``lad`` or a penalised fit (``soft``,
    ``hard``, ``scad``)."""
    if method == "ls":
        return estimate_w_least_squares(fr, z)
    if method == "lad":
        return estimate_w_lad(fr, z)
    if method in ("soft", "hard", "scad"):
        if fr.k == 0:
            return estimate_w_least_squares(fr, z)
        return estimate_w_penalized(fr, z, method, lam)[0]
    raise ParameterError(f"unknown method {method!r}; expected one of {METHODS}")


# ---------------------------------------------------------------------------
# FDP estimators


def false_discovery_terms(fr: FactorRepresentation, w, z_half: float) -> NDArray:
    """Per-hypothesis summands ``Phi(a_i (z + eta_i)) + Phi(a_i (z - eta_i))``
    with ``eta = B W``."""
    eta = fr.loadings @ _w_vector(fr, w)
    a = fr.a
    return std_normal_cdf(a * (z_half + eta)) + std_normal_cdf(a * (z_half - eta))


def fdp_estimate(fr: FactorRepresentation, w, t: float, R: int) -> tuple[float, float]:
    """Estimated false discoveries ``V_hat`` and ``V_hat / R`` (0 when R = 0)."""
    t = _check_t(t)
    if R < 0:
        raise ParameterError("R must be >= 0")
    v = float(np.sum(false_discovery_terms(fr, w, std_normal_quantile(t / 2.0))))
    return v, _ratio(v, R)


def fdp_oracle(fr: FactorRepresentation, w, t: float, R: int, truth: HypothesisTruth) -> float:
    """Same sum as :func:`fdp_estimate`, over the true nulls only."""
    t = _check_t(t)
    if truth.p != fr.p:
        raise ShapeError("truth and loadings differ in dimension")
    terms = false_discovery_terms(fr, w, std_normal_quantile(t / 2.0))
    return _ratio(float(np.sum(terms[truth.is_null])), R)


def adjusted_statistics(fr: FactorRepresentation, w, z: ArrayLike) -> NDArray:
    """``a_i (z_i - b_i^T W)``: factor effect removed, rescaled to unit variance."""
    z = as_test_vector(z)
    if z.size != fr.p:
        raise ShapeError(f"z has length {z.size}, loadings have p={fr.p}")
    return fr.a * (z - fr.loadings @ _w_vector(fr, w))


def fdp_adjusted_estimate(fr: FactorRepresentation, w, t: float, R_adj: int) -> tuple[float, float]:
    """``sum_i Phi(z_{t/2}/a_i + b_i^T W) + Phi(z_{t/2}/a_i - b_i^T W)`` over
    ``R_adj``."""
    t = _check_t(t)
    z_half = std_normal_quantile(t / 2.0)
    eta = fr.loadings @ _w_vector(fr, w)
    za = z_half / fr.a
    v = float(np.sum(std_normal_cdf(za + eta) + std_normal_cdf(za - eta)))
    return v, _ratio(v, R_adj)


def _check_thresholds(thresholds: Sequence[float]) -> NDArray:
    ts = np.asarray(thresholds, dtype=float).reshape(-1)
    if ts.size == 0:
        raise ParameterError("threshold list is empty")
    for t in ts:
        _check_t(t)
    if np.any(np.diff(ts) < 0):
        raise ParameterError("thresholds must be sorted ascending")
    return ts


def fdp_curve(
    z: ArrayLike,
    fr: FactorRepresentation,
    w,
    thresholds: Sequence[float],
    truth: HypothesisTruth | None = None,
) -> FdpReport:
    """Evaluate the FDP estimate (and ground truth, if given) on a threshold grid."""
    ts = _check_thresholds(thresholds)
    p = pvalues(z)
    rows = {key: [] for key in ("R", "V_hat", "fdp_hat", "V_true", "fdp_true", "fdp_oracle")}
    for t in ts:
        R, V = rejection_counts(p, t, truth)
        v_hat, fdp = fdp_estimate(fr, w, t, R)
        rows["R"].append(R)
        rows["V_hat"].append(v_hat)
        rows["fdp_hat"].append(fdp)
        if truth is not None:
            rows["V_true"].append(V)
            rows["fdp_true"].append(_ratio(V, R))
            rows["fdp_oracle"].append(fdp_oracle(fr, w, t, R, truth))
    extra = {}
    if truth is not None:
        extra = {
            "V_true": np.array(rows["V_true"], dtype=int),
            "fdp_true": np.array(rows["fdp_true"]),
            "fdp_oracle": np.array(rows["fdp_oracle"]),
        }
    return FdpReport(
        t=ts,
        R=np.array(rows["R"], dtype=int),
        V_hat=np.array(rows["V_hat"]),
        fdp_hat=np.array(rows["fdp_hat"]),
        **extra,
    )


def adjusted_fdp_curve(z_adj: ArrayLike, fr: FactorRepresentation, w, thresholds: Sequence[float]) -> FdpReport:
    """FDP report for the dependence-adjusted procedure (rejections counted on
    the adjusted statistics)."""
    ts = _check_thresholds(thresholds)
    p = pvalues(z_adj)
    R = np.array([rejection_counts(p, t)[0] for t in ts], dtype=int)
    est = [fdp_adjusted_estimate(fr, w, t, r) for t, r in zip(ts, R)]
    return FdpReport(t=ts, R=R, V_hat=np.array([e[0] for e in est]), fdp_hat=np.array([e[1] for e in est]))


# ---------------------------------------------------------------------------
# end-to-end fit


@dataclass(frozen=True)
class PfaFit:
    """Standardised statistics, factor loadings and realised factors for one
    testing problem."""

    z: NDArray
    scale: NDArray
    factors: FactorRepresentation
    realization: FactorRealization
    extra: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.factors.k

    def adjusted(self) -> NDArray:
        return adjusted_statistics(self.factors, self.realization, self.z)


def fit_pfa(
    z: ArrayLike,
    sigma: ArrayLike,
    k: int,
    method: Method = "ls",
    *,
    standardize: bool = True,
    lam: float | None = None,
    delta_a: float = 0.01,
) -> PfaFit:
    """Scale ``z`` by the marginal standard deviations of ``sigma`` (unless
    ``standardize`` is false), extract ``k`` loadings from the correlation
    matrix and estimate the realised factors."""
    z = as_test_vector(z)
    if standardize:
        corr, d = to_correlation(sigma)
        zs = z / d
    else:
        corr, d = np.asarray(sigma, dtype=float), np.ones_like(z)
        zs = z
    fr = top_k_loadings(top_eigen(corr, k), k, delta_a=delta_a)
    return PfaFit(zs, d, fr, estimate_w(fr, zs, method, lam))
