"""Multivariate linear regression reduction and the transformed SVS prior.

``Y = X B + E`` with ``E ~ N(0, sigma^2 I, I)`` reduces to the mean-matrix
problem ``Y1 = (X^T X)^{-1} X^T Y ~ N(B, sigma^2 (X^T X)^{-1}, I)``.  For
general observation and future covariances ``Sigma2`` and ``Sigma_f`` (of
``vec``), the transform ``A*`` below makes ``pi_SVS(vec^{-1}(A*^{-1} vec M))``
a prior whose composition with ``A*`` is superharmonic.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateInputError, RankDeficiencyError
from .matnorm import ModelSpec, replication_rng, singular_values, unvec, vec
from .priors import PriorKind, Svs, fd_second_differences, log_prior
from .estimators import bayes_terms, frobenius_loss
from .zonal import DEFAULT_CONTROL, SeriesControl

FD_BUDGET_REL = 1e-3
DEGENERATE_SIGMA = 1e-6


@dataclass(frozen=True)
class RegressionProblem:
    """Design ``X`` (n x p), response ``Y`` (n x q or stacked ``(..., n, q)``) and noise levels."""

    design: np.ndarray
    response: np.ndarray
    noise_var: float = 1.0
    future_design: np.ndarray | None = None
    future_noise_var: float = 1.0

    def __post_init__(self):
        x = np.asarray(self.design, dtype=float)
        y = np.asarray(self.response, dtype=float)
        object.__setattr__(self, "design", x)
        object.__setattr__(self, "response", y)
        if x.ndim != 2 or y.ndim < 2 or y.shape[-2] != x.shape[0]:
            raise ValueError(f"design {x.shape} and response {y.shape} are incompatible")
        if x.shape[1] < y.shape[-1]:
            raise ValueError("p >= q is required")
        if not (self.noise_var > 0 and self.future_noise_var > 0):
            raise ValueError("noise variances must be positive")
        if self.future_design is not None:
            object.__setattr__(self, "future_design", np.asarray(self.future_design, dtype=float))


def _gram_inverse(x: np.ndarray) -> np.ndarray:
    sig = singular_values(x)
    if sig[-1] <= max(x.shape) * np.finfo(float).eps * sig[0] * 1e3:
        raise RankDeficiencyError("X^T X is singular")
    return np.linalg.inv(x.T @ x)


def reduce(problem: RegressionProblem):
    """Least-squares reduction.

    Returns:
        ``(y1, y1_cov_scale, y2)`` with ``y1 = (X^T X)^{-1} X^T Y``, the row
        covariance ``sigma^2 (X^T X)^{-1}`` of ``y1`` and the residual
        ``y2 = Y - X y1``.

    Raises:
        RankDeficiencyError: singular design.
    """
    x = problem.design
    gi = _gram_inverse(x)
    # solve via least squares for accuracy, then residual
    y = problem.response
    flat = np.moveaxis(y, -2, 0).reshape(x.shape[0], -1)
    coef = np.linalg.lstsq(x, flat, rcond=None)[0]
    y1 = np.moveaxis(coef.reshape((x.shape[1],) + y.shape[:-2] + (y.shape[-1],)), 0, -2)
    y2 = y - x @ y1
    return y1, problem.noise_var * gi, y2


@dataclass(frozen=True)
class CovariancePairGeneral:
    """Covariances of ``vec`` of the observed and future mean-matrix statistics."""

    obs_cov: np.ndarray
    fut_cov: np.ndarray

    def __post_init__(self):
        for name in ("obs_cov", "fut_cov"):
            c = np.asarray(getattr(self, name), dtype=float)
            if c.ndim != 2 or c.shape[0] != c.shape[1]:
                raise ValueError(f"{name} must be square")
            if np.max(np.abs(c - c.T)) > 1e-10 * max(1.0, np.max(np.abs(c))):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(c)[0] <= 0:
                raise ValueError(f"{name} must be positive definite")
            object.__setattr__(self, name, 0.5 * (c + c.T))
        if self.obs_cov.shape != self.fut_cov.shape:
            raise ValueError("covariances must have equal size")

    @classmethod
    def from_regression(cls, problem: RegressionProblem) -> "CovariancePairGeneral":
        """``I_q (x) sigma^2 (X^T X)^{-1}`` and the same for the future design."""
        if problem.future_design is None:
            raise ValueError("problem has no future design")
        q = problem.response.shape[-1]
        c = problem.noise_var * _gram_inverse(problem.design)
        cf = problem.future_noise_var * _gram_inverse(problem.future_design)
        return cls(np.kron(np.eye(q), c), np.kron(np.eye(q), cf))


def _sqrt_spd(a: np.ndarray) -> np.ndarray:
    w, q = np.linalg.eigh(a)
    return (q * np.sqrt(w)) @ q.T


def _canonical_eigenbasis(k: np.ndarray, tol: float = 1e-10):
    """Eigenvalues in descending order with a deterministic orthonormal eigenbasis.

    Simple eigenvectors get their first nonzero entry positive.  Within a
    cluster of equal eigenvalues the basis is Gram-Schmidt applied to the
    projected standard basis, so ``k = c I`` yields the identity.
    """
    w, q = np.linalg.eigh(k)
    order = np.argsort(-w, kind="stable")
    w, q = w[order], q[:, order]
    d = w.size
    scale = max(1.0, np.max(np.abs(w)))
    out = np.empty_like(q)
    i = 0
    while i < d:
        j = i + 1
        while j < d and abs(w[j] - w[i]) <= tol * scale:
            j += 1
        block = q[:, i:j]
        if j - i == 1:
            v = block[:, 0]
            nz = np.flatnonzero(np.abs(v) > 1e-12)
            out[:, i] = -v if v[nz[0]] < 0 else v
        else:
            proj = block @ block.T
            basis = []
            for e in np.eye(d):
                u = proj @ e
                for b in basis:
                    u = u - (b @ u) * b
                nu = np.linalg.norm(u)
                if nu > 1e-8:
                    basis.append(u / nu)
                if len(basis) == j - i:
                    break
            out[:, i:j] = np.stack(basis, axis=1)
        i = j
    return w, out


def build_a_star(cov: CovariancePairGeneral) -> np.ndarray:
    """The matrix ``A* = Sigma1^{1/2} Q (Lambda^{-1} - I)^{1/2}``.

    Here ``Sigma1 = (Sigma2^{-1} + Sigma_f^{-1})^{-1}``, ``Sigma2`` is the
    observation covariance and ``Sigma1^{1/2} Sigma2^{-1} Sigma1^{1/2} = Q Lambda Q^T``
    with ``Lambda`` in descending order.
    """
    s2_inv = np.linalg.inv(cov.obs_cov)
    s1 = np.linalg.inv(s2_inv + np.linalg.inv(cov.fut_cov))
    s1 = 0.5 * (s1 + s1.T)
    s1h = _sqrt_spd(s1)
    k = s1h @ s2_inv @ s1h
    lam, q = _canonical_eigenbasis(0.5 * (k + k.T))
    if lam[0] >= 1.0 or lam[-1] <= 0.0:
        raise DegenerateInputError("eigenvalues of Sigma1^{1/2} Sigma2^{-1} Sigma1^{1/2} must lie in (0, 1)")
    return s1h @ q @ np.diag(np.sqrt(1.0 / lam - 1.0))


def prior_koba_eval(a_star, spec: ModelSpec, m_matrix):
    """Log of ``pi_SVS(vec^{-1}(A*^{-1} vec M))``; ``+inf`` where the back-transform is rank deficient."""
    return log_prior(PriorKind.transformed(a_star), spec, m_matrix)


@dataclass
class KobaReport:
    """Per-point Laplacians of the composed prior and their FD error budgets."""

    laplacians: np.ndarray
    budgets: np.ndarray
    excluded: list = field(default_factory=list)

    @property
    def violations(self) -> np.ndarray:
        """Points where the Laplacian exceeds its budget (not superharmonic)."""
        return self.laplacians > self.budgets

    @property
    def near_zero(self) -> np.ndarray:
        return np.abs(self.laplacians) <= self.budgets

    @property
    def passed(self) -> bool:
        return bool(self.laplacians.size) and not self.violations.any()


def koba_superharmonicity_check(a_star, spec: ModelSpec, sample_points, h: float | None = None,
                                compose_with=None, regularize_k: int | None = None) -> KobaReport:
    """FD Laplacian of ``X -> pi(vec^{-1}(T vec X))`` at each sample point.

    ``pi`` is the transformed prior built from ``a_star`` (or the regularized
    SVS prior composed with ``A*^{-1}`` when ``regularize_k`` is given) and
    ``T = compose_with`` defaults to ``a_star``, in which case the composed
    function is ``pi_SVS`` itself.  Passing another ``T`` gives a negative
    control.  Points whose argument to ``pi_SVS`` has a singular value below
    ``1e-6`` are excluded.

    The budget at each point is ``1e-3`` times the sum of the absolute
    second differences.
    """
    a = np.asarray(a_star, dtype=float)
    t = a if compose_with is None else np.asarray(compose_with, dtype=float)
    a_inv = np.linalg.inv(a)
    base = Svs if regularize_k is None else PriorKind.regularized(regularize_k)
    n, m = spec.shape

    def inner(x):
        # argument handed to the SVS (or regularized) density
        flat = np.swapaxes(x, -1, -2).reshape(x.shape[:-2] + (n * m,))
        w = flat @ (a_inv @ t).T
        return np.swapaxes(w.reshape(x.shape[:-2] + (m, n)), -1, -2)

    def field_fn(x):
        return np.exp(log_prior(base, spec, inner(x)))

    laps, budgets, excluded = [], [], []
    for idx, p in enumerate(sample_points):
        p = np.asarray(p, dtype=float)
        if singular_values(inner(p))[-1] < DEGENERATE_SIGMA:
            excluded.append((idx, "rank-deficient after back-transform"))
            continue
        sec = fd_second_differences(field_fn, p, h, vectorized=True)
        laps.append(sec.sum())
        budgets.append(FD_BUDGET_REL * np.abs(sec).sum())
    return KobaReport(np.array(laps), np.array(budgets), excluded)


@dataclass(frozen=True)
class ReducedRankResult:
    mle_risk: float
    mle_se: float
    svs_risk: float
    svs_se: float
    diff_se: float
    replications: int
    flagged: int


def orthonormal_design(n_obs: int, p: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n_obs, p)))
    return q * np.sign(np.diag(r))


def simulate_reduced_rank(p: int = 5, q: int = 3, rank: int = 1, n_obs: int = 20,
                          noise_var: float = 1.0, replications: int = 2000, seed: int = 0,
                          ctrl: SeriesControl = DEFAULT_CONTROL, chunk: int = 500) -> ReducedRankResult:
    """Frobenius risk of MLE and the SVS Bayes estimator for a low-rank coefficient matrix.

    ``B`` is a product of ``p x rank`` and ``rank x q`` standard Gaussian
    factors.  The design has orthonormal columns, so the reduced problem is
    ``N(B, noise_var I, I)`` and the SVS estimator is applied with that scale.
    """
    setup = replication_rng(seed, 0)
    b = setup.standard_normal((p, rank)) @ setup.standard_normal((rank, q))
    x = orthonormal_design(n_obs, p, setup)
    spec = ModelSpec(p, q, v1=noise_var)
    noise = np.stack([replication_rng(seed, 1, r).standard_normal((n_obs, q)) for r in range(replications)])
    y = x @ b + np.sqrt(noise_var) * noise
    y1, cov_scale, _ = reduce(RegressionProblem(x, y, noise_var))
    if not np.allclose(cov_scale, noise_var * np.eye(p), atol=1e-10):
        raise ValueError("design must have orthonormal columns")
    loss_mle = frobenius_loss(y1, b)
    loss_svs = np.empty(replications)
    flagged = 0
    for s in range(0, replications, chunk):
        est, conv, _ = bayes_terms(Svs, spec, y1[s:s + chunk], noise_var, ctrl)
        loss_svs[s:s + chunk] = frobenius_loss(est, b)
        flagged += int(np.sum(~conv))
    root = np.sqrt(replications)
    return ReducedRankResult(float(loss_mle.mean()), float(loss_mle.std(ddof=1) / root),
                             float(loss_svs.mean()), float(loss_svs.std(ddof=1) / root),
                             float((loss_mle - loss_svs).std(ddof=1) / root), replications, flagged)
