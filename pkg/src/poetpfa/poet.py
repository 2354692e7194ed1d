"""Covariance estimation under an approximate factor model.

The estimator keeps the leading ``k`` principal components of the sample
covariance and adaptively thresholds the covariance of what is left over:

    Sigma_poet = sum_{i<=k} l_i g_i g_i^T + T(Sigma_u)

where ``T`` shrinks each off-diagonal residual covariance toward zero by an
entry-specific amount ``C * theta_ij * omega_p``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import (
    DomainError,
    InsufficientDataError,
    ParameterError,
    RankError,
    ShapeError,
    as_data_matrix,
    as_symmetric,
    symmetrize,
)
from .eigen import fix_signs, smallest_eigenvalue, top_eigen

logger = logging.getLogger(__name__)

Rule = Literal["soft", "hard", "scad"]
RULES = ("soft", "hard", "scad")
SCAD_A = 3.7
MAX_DOUBLINGS = 6


@dataclass(frozen=True)
class PoetConfig:
    """Tuning of :func:`poet_covariance`.

    ``k`` is a factor count or ``"auto"``.  ``C`` is the starting threshold
    constant; with ``escalate`` it is doubled (at most ``MAX_DOUBLINGS`` times)
    until the thresholded residual covariance has smallest eigenvalue
    ``>= pd_floor``.
    """

    k: Union[int, Literal["auto"]] = "auto"
    C: float = 0.5
    rule: Rule = "soft"
    epsilon_k: float = 0.1
    pd_floor: float = 1e-6
    escalate: bool = True
    k_max: int = 20

    def __post_init__(self):
        if self.k != "auto" and (not isinstance(self.k, (int, np.integer)) or self.k < 0):
            raise ParameterError(f"k must be a non-negative integer or 'auto', got {self.k!r}")
        if not self.C >= 0:
            raise ParameterError("C must be >= 0")
        if self.rule not in RULES:
            raise ParameterError(f"rule must be one of {RULES}, got {self.rule!r}")
        if not self.epsilon_k > 0:
            raise ParameterError("epsilon_k must be > 0")
        if not self.pd_floor >= 0:
            raise ParameterError("pd_floor must be >= 0")
        if self.k_max < 0:
            raise ParameterError("k_max must be >= 0")


@dataclass(frozen=True)
class ResidualStats:
    """Residual covariances ``sigma_hat``, entry variances ``theta_hat``
    (i.e. theta squared) and the residual matrix itself (n x p)."""

    sigma_hat: NDArray
    theta_hat: NDArray
    residuals: NDArray
    factors: NDArray = field(repr=False)
    loadings: NDArray = field(repr=False)


@dataclass(frozen=True)
class PoetEstimate:
    sigma_poet: NDArray
    loadings: NDArray  # p x k, columns sqrt(l_i) g_i of the sample covariance
    sigma_u_thr: NDArray
    omega_p: float
    c_used: float
    k_used: int
    min_eig_residual: float
    pd_ok: bool
    k_path: tuple = ()

    @property
    def low_rank(self) -> NDArray:
        return self.loadings @ self.loadings.T


def omega(n: int, p: int) -> float:
    """Threshold rate ``1/sqrt(p) + sqrt(log(p) / n)`` (natural log)."""
    return 1.0 / math.sqrt(p) + math.sqrt(math.log(p) / n)


def sample_covariance(x: ArrayLike) -> NDArray:
    """Sample covariance with divisor ``n``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2 and x.shape[0] < 2:
        raise InsufficientDataError(f"need at least 2 observations, got {x.shape[0]}")
    x = as_data_matrix(x)
    xc = x - x.mean(axis=0)
    return symmetrize(xc.T @ xc / x.shape[0])


class SampleSpectrum:
    """Thin SVD of the centred data, ``Xc = U D V^T``.

    The eigenpairs of the sample covariance are ``(d_i^2 / n, v_i)``; carrying
    the SVD lets several factor counts share a single decomposition.
    """

    def __init__(self, x: ArrayLike):
        x = as_data_matrix(x)
        self.n, self.p = x.shape
        self.xc = x - x.mean(axis=0)
        _, d, vt = np.linalg.svd(self.xc, full_matrices=False)
        self.v = fix_signs(vt.T)
        self.d = d
        self.eigenvalues = d**2 / self.n

    def factors(self, k: int) -> tuple[NDArray, NDArray]:
        """Estimated factors ``F`` (n x k, ``F^T F / n = I``) and loadings
        ``B`` (p x k)."""
        r = min(self.n, self.p)
        if not 0 <= k < r:
            raise ParameterError(f"k must satisfy 0 <= k < min(n, p) = {r}, got {k}")
        if k and self.d[k - 1] <= 1e-12 * max(self.d[0], 1e-300):
            raise RankError(f"sample covariance has rank < {k}")
        v = self.v[:, :k]
        d = self.d[:k]
        # u_i = Xc v_i / d_i keeps the factor signs tied to the loading signs
        f = math.sqrt(self.n) * (self.xc @ v) / d
        b = v * (d / math.sqrt(self.n))
        return f, b


def residual_stats(x: ArrayLike, k: int, *, spectrum: SampleSpectrum | None = None) -> ResidualStats:
    """Residuals after removing ``k`` principal factors, with
    ``sigma_ij = mean_l u_il u_jl`` and ``theta_ij = mean_l (u_il u_jl - sigma_ij)^2``."""
    spec = spectrum if spectrum is not None else SampleSpectrum(x)
    f, b = spec.factors(k)
    u = spec.xc - f @ b.T
    n = spec.n
    sigma = symmetrize(u.T @ u / n)
    u2 = u * u
    theta = symmetrize(u2.T @ u2 / n - sigma * sigma)
    np.maximum(theta, 0.0, out=theta)
    return ResidualStats(sigma, theta, u, f, b)


def threshold_values(z: NDArray, tau: NDArray, rule: Rule) -> NDArray:
    """Elementwise thresholding rule ``s(z)`` with thresholds ``tau``."""
    z = np.asarray(z, dtype=float)
    tau = np.broadcast_to(np.asarray(tau, dtype=float), z.shape)
    az = np.abs(z)
    if rule == "hard":
        return np.where(az >= tau, z, 0.0)
    soft = np.sign(z) * np.maximum(az - tau, 0.0)
    if rule == "soft":
        return soft
    if rule == "scad":
        mid = ((SCAD_A - 1.0) * z - np.sign(z) * SCAD_A * tau) / (SCAD_A - 2.0)
        return np.where(az <= 2.0 * tau, soft, np.where(az <= SCAD_A * tau, mid, z))
    raise ParameterError(f"unknown thresholding rule {rule!r}")


def adaptive_threshold(rs: ResidualStats, omega_p: float, C: float, rule: Rule = "soft") -> NDArray:
    """Threshold off-diagonal residual covariances at ``C * theta_ij * omega_p``;
    the diagonal passes through."""
    if not omega_p > 0:
        raise ParameterError("omega_p must be > 0")
    if not C >= 0:
        raise ParameterError("C must be >= 0")
    sigma = rs.sigma_hat
    if rs.theta_hat.shape != sigma.shape:
        raise ShapeError("sigma_hat and theta_hat shapes differ")
    if C == 0:
        return sigma.copy()
    tau = C * np.sqrt(rs.theta_hat) * omega_p
    out = threshold_values(sigma, tau, rule)
    np.fill_diagonal(out, np.diag(sigma))
    return symmetrize(out)


def select_num_factors(eigenvalues: ArrayLike, p: int, epsilon: float) -> int:
    """Number of eigenvalues strictly above ``epsilon * sqrt(p)``."""
    lam = np.asarray(eigenvalues, dtype=float)
    if not epsilon > 0:
        raise ParameterError("epsilon must be > 0")
    if lam.size > 1 and np.any(np.diff(lam) > 0):
        raise DomainError("eigenvalues must be sorted in non-increasing order")
    return int(np.count_nonzero(lam > epsilon * math.sqrt(p)))


def to_correlation(sigma: ArrayLike) -> tuple[NDArray, NDArray]:
    """``D^-1 Sigma D^-1`` with ``D = diag(sqrt(sigma_jj))``; returns the
    correlation matrix and ``D``'s diagonal."""
    sigma = as_symmetric(sigma)
    diag = np.diag(sigma)
    bad = np.flatnonzero(~(diag > 0))
    if bad.size:
        raise DomainError(f"non-positive variance at index {int(bad[0])}")
    d = np.sqrt(diag)
    corr = sigma / np.outer(d, d)
    np.fill_diagonal(corr, 1.0)
    return corr, d


def _assemble(spec: SampleSpectrum, k: int, cfg: PoetConfig, om: float, *, check_pd: bool = True) -> PoetEstimate:
    rs = residual_stats(None, k, spectrum=spec)
    c = float(cfg.C)
    min_eig = np.nan
    for attempt in range(MAX_DOUBLINGS + 1):
        thr = adaptive_threshold(rs, om, c, cfg.rule)
        if not check_pd:
            break
        min_eig = smallest_eigenvalue(thr)
        if min_eig >= cfg.pd_floor or not cfg.escalate or c == 0 or attempt == MAX_DOUBLINGS:
            break
        c *= 2.0
    pd_ok = bool(min_eig >= cfg.pd_floor)
    if check_pd and not pd_ok:
        logger.warning(
            "thresholded residual covariance not positive definite (min eig %.3g, C=%.3g)", min_eig, c
        )
    b = rs.loadings
    return PoetEstimate(
        sigma_poet=symmetrize(b @ b.T + thr),
        loadings=b,
        sigma_u_thr=thr,
        omega_p=om,
        c_used=c,
        k_used=k,
        min_eig_residual=min_eig,
        pd_ok=pd_ok,
    )


def poet_covariance(x: ArrayLike, cfg: PoetConfig = PoetConfig(), *, spectrum: SampleSpectrum | None = None) -> PoetEstimate:
    """POET covariance estimate.

    With ``cfg.k == "auto"`` the factor count is the smallest ``k`` for which
    the correlation-scaled estimate built with ``k`` factors has its
    ``(k+1)``-th eigenvalue at or below ``epsilon_k * sqrt(p)``.  Candidates
    are built at the starting ``C`` (escalating ``C`` while ``k`` is still too
    small would threshold away the factor structure being counted); the
    search stops at ``min(k_max, min(n, p) - 1)``.
    """
    spec = spectrum if spectrum is not None else SampleSpectrum(x)
    om = omega(spec.n, spec.p)
    if cfg.k != "auto":
        return _assemble(spec, int(cfg.k), cfg, om)

    limit = min(cfg.k_max, min(spec.n, spec.p) - 1)
    path = []
    for k in range(limit + 1):
        trial = _assemble(spec, k, cfg, om, check_pd=False)
        corr, _ = to_correlation(trial.sigma_poet)
        lead = top_eigen(corr, min(k + 1, spec.p)).eigenvalues
        count = select_num_factors(lead, spec.p, cfg.epsilon_k)
        path.append(count)
        if count <= k:
            break
    else:
        logger.warning("factor selection hit the cap k=%d", limit)
    est = _assemble(spec, k, cfg, om)
    return PoetEstimate(**{**est.__dict__, "k_path": tuple(path)})
