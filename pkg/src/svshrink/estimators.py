"""Point estimators of the mean matrix."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateInputError, RankDeficiencyError, SeriesConvergenceError
from .matnorm import ModelSpec, check_shape, compose, svd
from .priors import STEIN, SVS, PriorKind, grad_terms
from .zonal import DEFAULT_CONTROL, SeriesControl

FD_EPS = 1e-6


@dataclass(frozen=True)
class EstimateReport:
    """An estimate with its label and optional series diagnostics."""

    estimate: np.ndarray
    estimator_id: str
    diagnostics: dict | None = field(default=None)


def mle(spec: ModelSpec, x) -> EstimateReport:
    """Maximum likelihood estimate, i.e. ``x`` itself."""
    return EstimateReport(check_shape(spec, x, "x").copy(), "mle")


def james_stein(spec: ModelSpec, x, scale: float = 1.0) -> EstimateReport:
    """``(1 - (nm - 2) scale / ||x||_F^2) x`` on ``vec(x)``."""
    xx = check_shape(spec, x, "x")
    if spec.dim < 3:
        raise ValueError("James-Stein needs nm >= 3")
    norm2 = float(np.sum(xx**2))
    if norm2 == 0.0:
        raise DegenerateInputError("James-Stein is undefined at x = 0")
    return EstimateReport((1.0 - (spec.dim - 2) * scale / norm2) * xx, "james-stein")


def efron_morris(spec: ModelSpec, x, scale: float = 1.0, positive_part: bool = False) -> EstimateReport:
    """Efron-Morris estimate ``X (I - (n - m - 1) scale (X^T X)^{-1})``.

    Args:
        positive_part: clamp each shrunk singular value at zero.  Off by
            default; the plain estimator is the reference one.

    Raises:
        RankDeficiencyError: ``X^T X`` is singular.
    """
    xx = check_shape(spec, x, "x")
    s = xx.T @ xx
    if np.linalg.matrix_rank(xx) < spec.m:
        raise RankDeficiencyError("Efron-Morris needs X^T X invertible")
    c = (spec.n - spec.m - 1) * scale
    if positive_part:
        u, sig, v = svd(xx)
        return EstimateReport(compose(u, np.maximum(sig - c / sig, 0.0), v), "efron-morris+")
    est = xx @ (np.eye(spec.m) - c * np.linalg.inv(s))
    return EstimateReport(est, "efron-morris")


def efron_morris_svd(spec: ModelSpec, x, scale: float = 1.0) -> np.ndarray:
    """Singular-value form of :func:`efron_morris`: ``sigma_i -> (1 - c / sigma_i^2) sigma_i``."""
    xx = check_shape(spec, x, "x")
    u, sig, v = svd(xx)
    if sig[-1] <= spec.n * np.finfo(float).eps * max(sig[0], 1.0):
        raise RankDeficiencyError("Efron-Morris needs X^T X invertible")
    c = (spec.n - spec.m - 1) * scale
    return compose(u, (1.0 - c / sig**2) * sig, v)


def bayes_terms(kind: PriorKind, spec: ModelSpec, x, scale: float = 1.0,
                ctrl: SeriesControl = DEFAULT_CONTROL, eps: float = FD_EPS):
    """Batched Bayes estimates ``x + scale * grad log m(x; scale)``.

    Returns ``(estimates, converged, terms_used)`` over the leading axes of ``x``.
    """
    if kind.tag not in (SVS, STEIN):
        raise ValueError(f"Bayes estimate is provided for the SVS and Stein priors, not {kind!r}")
    xx = check_shape(spec, x, "x")
    grad, conv, terms = grad_terms(kind, spec, xx, scale, eps, ctrl)
    return xx + scale * grad, conv, terms


def bayes_estimate(kind: PriorKind, spec: ModelSpec, x, scale: float = 1.0,
                   ctrl: SeriesControl = DEFAULT_CONTROL) -> EstimateReport:
    """Generalized Bayes estimate under the SVS or Stein prior.

    The gradient of the log marginal is taken by central differences with
    step ``1e-6`` in every entry.

    Raises:
        SeriesConvergenceError: the series failed at some stencil point.
    """
    xx = check_shape(spec, x, "x")
    est, conv, terms = bayes_terms(kind, spec, xx, scale, ctrl)
    if not conv:
        raise SeriesConvergenceError(
            f"1F1 series did not converge on the gradient stencil around x (terms_used={int(terms)})",
            terms_used=int(terms), point=xx)
    label = "svs-bayes" if kind.tag == SVS else "stein-bayes"
    return EstimateReport(est, label, {"converged": True, "terms_used": int(terms)})


def frobenius_loss(estimate, truth):
    """Squared Frobenius distance; broadcasts over leading axes."""
    d = np.asarray(estimate, dtype=float) - np.asarray(truth, dtype=float)
    out = np.sum(d**2, axis=(-2, -1))
    return float(out) if np.ndim(out) == 0 else out
