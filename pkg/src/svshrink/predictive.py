"""Bayesian predictive densities and Kullback-Leibler loss.

Under ``Y ~ N(M, v1 I, I)`` and ``Y_f ~ N(M, v2 I, I)``, the statistic
``Z = v0 (Y / v1 + Y_f / v2)`` with ``v0 = v1 v2 / (v1 + v2)`` is sufficient
for ``M`` given both observations, and ``Z ~ N(M, v0 I, I)``.  Hence for any
prior

    p(Y_f | Y) = [N(Y; 0, v1) N(Y_f; 0, v2) / N(Z; 0, v0)] * m(Z; v0) / m(Y; v1)

where the bracket does not depend on ``M``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import SeriesConvergenceError
from .matnorm import LOG_2PI, ModelSpec, check_shape, log_density, singular_values
from .priors import STEIN, SVS, UNIFORM, PriorKind, Stein, Svs, Uniform, marginal_terms
from .zonal import DEFAULT_CONTROL, SeriesControl, log_etr_hyp1f1


@dataclass(frozen=True)
class PredictiveQuery:
    """Observed ``y`` and a candidate future value ``y_future``."""

    spec: ModelSpec
    y: np.ndarray
    y_future: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", check_shape(self.spec, self.y, "y"))
        object.__setattr__(self, "y_future", check_shape(self.spec, self.y_future, "y_future"))

    @property
    def z(self) -> np.ndarray:
        s = self.spec
        return s.v0 * (self.y / s.v1 + self.y_future / s.v2)


def log_pred_terms(kind: PriorKind, spec: ModelSpec, y, y_future, ctrl: SeriesControl = DEFAULT_CONTROL):
    """Batched log predictive density with convergence status.

    Returns ``(log_p, converged, terms_used)`` over the leading axes.
    """
    y = check_shape(spec, y, "y")
    yf = check_shape(spec, y_future, "y_future")
    if kind.tag == UNIFORM:
        val = log_density(spec, yf, y, spec.v1 + spec.v2)
        lead = np.shape(val)
        return val, np.ones(lead, bool), np.zeros(lead, int)
    if kind.tag not in (SVS, STEIN):
        raise ValueError(f"no predictive density for {kind!r}")
    z = spec.v0 * (y / spec.v1 + yf / spec.v2)
    zero = np.zeros(spec.shape)
    gauss = (log_density(spec, y, zero, spec.v1) + log_density(spec, yf, zero, spec.v2)
             - log_density(spec, z, zero, spec.v0))
    lz, cz, tz = marginal_terms(kind, spec, z, spec.v0, ctrl)
    ly, cy, ty = marginal_terms(kind, spec, y, spec.v1, ctrl)
    return gauss + lz - ly, cz & cy, np.maximum(tz, ty)


def _single(kind: PriorKind, q: PredictiveQuery, ctrl: SeriesControl) -> float:
    val, conv, terms = log_pred_terms(kind, q.spec, q.y, q.y_future, ctrl)
    if not conv:
        raise SeriesConvergenceError(
            f"1F1 series did not converge for the predictive density (terms_used={int(terms)})",
            terms_used=int(terms))
    return float(val)


def log_pred_uniform(q: PredictiveQuery) -> float:
    """Log of ``N(Y_f; Y, (v1 + v2) I, I)``, the predictive under the uniform prior."""
    return _single(Uniform, q, DEFAULT_CONTROL)


def log_pred_svs(q: PredictiveQuery, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Log predictive density under the singular value shrinkage prior."""
    return _single(Svs, q, ctrl)


def log_pred_stein(q: PredictiveQuery, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Log predictive density under the Stein prior on ``vec(M)``."""
    return _single(Stein, q, ctrl)


def _log_hyp1f1(m: int, n: int, eig: np.ndarray, ctrl: SeriesControl) -> float:
    val, conv, terms = log_etr_hyp1f1(m, n, eig, ctrl)
    if not conv:
        raise SeriesConvergenceError("1F1 series did not converge", terms_used=int(terms))
    return float(val) + float(np.sum(eig))


def log_pred_svs_unit(q: PredictiveQuery, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Closed form of the SVS predictive for ``v1 = v2 = 1``, written in ``Z = Y + Y_f``.

    ``-(nm/2) log 2 pi - |Y_f - Y|^2/4 - |Z|^2/4 + |Y|^2/2 - (m(m+1)/2) log 2
    + log 1F1((m+1)/2; n/2; Z^T Z / 4) - log 1F1((m+1)/2; n/2; Y^T Y / 2)``.
    Used as an independent check of the factorized route.
    """
    spec = q.spec
    if spec.v1 != 1.0 or spec.v2 != 1.0:
        raise ValueError("closed form requires v1 = v2 = 1")
    n, m = spec.shape
    y, yf = q.y, q.y_future
    z = y + yf
    out = (-0.5 * spec.dim * LOG_2PI - 0.25 * np.sum((yf - y) ** 2) - 0.25 * np.sum(z**2)
           + 0.5 * np.sum(y**2) - 0.5 * m * (m + 1) * math.log(2.0))
    out += _log_hyp1f1(m, n, singular_values(z) ** 2 / 4.0, ctrl)
    out -= _log_hyp1f1(m, n, singular_values(y) ** 2 / 2.0, ctrl)
    return float(out)


def kl_losses(kind: PriorKind, spec: ModelSpec, truth, y, y_future, ctrl: SeriesControl = DEFAULT_CONTROL):
    """Batched ``log N(Y_f; M, v2) - log p(Y_f | Y)`` with convergence status."""
    lp, conv, terms = log_pred_terms(kind, spec, y, y_future, ctrl)
    return log_density(spec, y_future, truth, spec.v2) - lp, conv, terms


def kl_loss_sample(spec: ModelSpec, truth, predictive: Callable[[PredictiveQuery], float],
                   rng: np.random.Generator) -> float:
    """One-draw unbiased estimate of the Kullback-Leibler risk of ``predictive`` at ``truth``.

    Draws ``Y ~ N(M, v1)`` then ``Y_f ~ N(M, v2)`` from ``rng``.
    """
    mean = check_shape(spec, truth, "truth")
    y = mean + math.sqrt(spec.v1) * rng.standard_normal(spec.shape)
    yf = mean + math.sqrt(spec.v2) * rng.standard_normal(spec.shape)
    q = PredictiveQuery(spec, y, yf)
    return float(log_density(spec, yf, mean, spec.v2)) - predictive(q)
