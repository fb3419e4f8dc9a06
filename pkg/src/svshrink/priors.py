"""Priors on the mean matrix, their marginals, and superharmonicity checks."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .exceptions import DegenerateInputError, SeriesConvergenceError
from .matnorm import ModelSpec, check_shape, singular_values, unvec, vec
from .zonal import DEFAULT_CONTROL, SeriesControl, log_etr_hyp1f1, log_mv_gamma

UNIFORM, STEIN, SVS, REGULARIZED_SVS, TRANSFORMED_SVS = (
    "uniform", "stein", "svs", "regularized_svs", "transformed_svs")


@dataclass(frozen=True, eq=False)
class PriorKind:
    """Tagged prior choice.

    Use the module constants ``Uniform``, ``Stein``, ``Svs`` or the
    constructors :meth:`regularized` and :meth:`transformed`.
    """

    tag: str
    k: int | None = None
    a_star: np.ndarray | None = None

    def __post_init__(self):
        if self.tag not in (UNIFORM, STEIN, SVS, REGULARIZED_SVS, TRANSFORMED_SVS):
            raise ValueError(f"unknown prior tag {self.tag!r}")
        if self.tag == REGULARIZED_SVS and not (self.k is not None and int(self.k) == self.k and self.k >= 1):
            raise ValueError("regularized SVS prior needs an integer k >= 1")
        if self.tag == TRANSFORMED_SVS:
            a = np.asarray(self.a_star, dtype=float)
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise ValueError("a_star must be a square matrix")
            if np.linalg.cond(a) > 1e12:
                raise DegenerateInputError("a_star must be invertible")
            object.__setattr__(self, "a_star", a)

    @classmethod
    def regularized(cls, k: int) -> "PriorKind":
        return cls(REGULARIZED_SVS, k=k)

    @classmethod
    def transformed(cls, a_star) -> "PriorKind":
        return cls(TRANSFORMED_SVS, a_star=a_star)

    def __repr__(self):
        if self.tag == REGULARIZED_SVS:
            return f"PriorKind({self.tag}, k={self.k})"
        return f"PriorKind({self.tag})"


Uniform = PriorKind(UNIFORM)
Stein = PriorKind(STEIN)
Svs = PriorKind(SVS)


def _rank_deficient(sig: np.ndarray, n: int) -> np.ndarray:
    tol = n * np.finfo(float).eps * np.maximum(sig[..., 0], np.finfo(float).tiny)
    return sig[..., -1] <= tol


def log_prior(kind: PriorKind, spec: ModelSpec, m_matrix):
    """Log prior density (unnormalized); ``+inf`` on the singular set.

    Broadcasts over leading axes of ``m_matrix``.
    """
    mm = check_shape(spec, m_matrix, "m_matrix")
    n, m = spec.shape
    r = n - m - 1
    if kind.tag == UNIFORM:
        out = np.zeros(mm.shape[:-2])
    elif kind.tag == STEIN:
        norm2 = np.sum(mm**2, axis=(-2, -1))
        with np.errstate(divide="ignore"):
            out = -0.5 * (spec.dim - 2) * np.log(norm2)
    elif kind.tag == SVS:
        sig = singular_values(mm)
        with np.errstate(divide="ignore"):
            out = -r * np.sum(np.log(sig), axis=-1)
        out = np.where(_rank_deficient(sig, n), np.inf, out)
    elif kind.tag == REGULARIZED_SVS:
        sig = singular_values(mm)
        out = -0.5 * r * np.sum(np.log(sig**2 + 1.0 / kind.k), axis=-1)
    else:
        a = kind.a_star
        if a.shape != (spec.dim, spec.dim):
            raise ValueError(f"a_star must be {spec.dim}x{spec.dim}")
        flat = np.swapaxes(mm, -1, -2).reshape(mm.shape[:-2] + (spec.dim,))  # vec per matrix
        back = np.linalg.solve(a, flat[..., None])[..., 0]
        back = np.swapaxes(back.reshape(mm.shape[:-2] + (m, n)), -1, -2)
        return log_prior(Svs, spec, back)
    return out[()] if np.ndim(out) == 0 else out


def prior_density(kind: PriorKind, spec: ModelSpec, m_matrix):
    """``exp(log_prior)``; convenient as a scalar field for Laplacian checks."""
    return np.exp(log_prior(kind, spec, m_matrix))


def _log_const_svs(n: int, m: int) -> float:
    return -0.5 * m * (n - m - 1) * math.log(2.0) + log_mv_gamma(m, (m + 1) / 2) - log_mv_gamma(m, n / 2)


def marginal_terms(kind: PriorKind, spec: ModelSpec, y, scale: float = 1.0,
                   ctrl: SeriesControl = DEFAULT_CONTROL):
    """Log marginal density ``log int N(Y; M, scale I, I) pi(M) dM`` with status.

    Supported kinds: Uniform, Stein, SVS.  Broadcasts over leading axes.

    Returns:
        ``(log_m, converged, terms_used)``.
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    yy = check_shape(spec, y, "y")
    lead = yy.shape[:-2]
    n, m = spec.shape
    if kind.tag == UNIFORM:
        return np.zeros(lead), np.ones(lead, bool), np.zeros(lead, int)
    if kind.tag == SVS:
        lam = singular_values(yy) ** 2 / (2.0 * scale)
        core, conv, terms = log_etr_hyp1f1(m, n, lam, ctrl)
        const = _log_const_svs(n, m) - 0.5 * m * (n - m - 1) * math.log(scale)
        return const + core, conv, terms
    if kind.tag == STEIN:
        # the Stein prior on vec(Y) is the one-column SVS prior in dimension d = nm
        d = spec.dim
        lam = np.sum(yy**2, axis=(-2, -1))[..., None] / (2.0 * scale)
        core, conv, terms = log_etr_hyp1f1(1, d, lam, ctrl)
        const = -0.5 * (d - 2) * math.log(2.0) - gammaln(d / 2) - 0.5 * (d - 2) * math.log(scale)
        return const + core, conv, terms
    raise ValueError(f"no closed-form marginal for {kind!r}")


def _raise_unconverged(conv, terms, what="marginal"):
    if not np.all(conv):
        raise SeriesConvergenceError(
            f"1F1 series for the {what} did not converge within {int(np.max(terms))} orders",
            terms_used=int(np.max(terms)))


def log_marginal(kind: PriorKind, spec: ModelSpec, y, scale: float = 1.0,
                 ctrl: SeriesControl = DEFAULT_CONTROL):
    """Like :func:`marginal_terms` but raises when the series fails to converge."""
    val, conv, terms = marginal_terms(kind, spec, y, scale, ctrl)
    _raise_unconverged(conv, terms)
    return val[()] if np.ndim(val) == 0 else val


def log_marginal_svs(spec: ModelSpec, y, scale: float = 1.0, ctrl: SeriesControl = DEFAULT_CONTROL):
    """Log marginal density of ``Y ~ N(M, scale I, I)`` under the SVS prior.

    For ``scale = 1`` this is
    ``log[2^{-m(n-m-1)/2} Gamma_m((m+1)/2) / Gamma_m(n/2)] - tr(S) + log 1F1((m+1)/2; n/2; S)``
    with ``S = Y^T Y / 2``; other scales follow from homogeneity of the prior:
    ``m(Y; v) = v^{-m(n-m-1)/2} m(Y / sqrt(v); 1)``.
    """
    return log_marginal(Svs, spec, y, scale, ctrl)


def _unit_stencil(spec: ModelSpec) -> np.ndarray:
    return np.eye(spec.dim).reshape(spec.dim, spec.m, spec.n).swapaxes(-1, -2)


def grad_terms(kind: PriorKind, spec: ModelSpec, y, scale: float = 1.0, eps: float = 1e-6,
               ctrl: SeriesControl = DEFAULT_CONTROL):
    """Central-difference gradient of the log marginal, with convergence status.

    Broadcasts over leading axes of ``y``.  Returns ``(grad, converged, terms)``
    where the status aggregates all ``2nm`` stencil points.
    """
    if kind.tag not in (SVS, STEIN):
        raise ValueError(f"gradient is only provided for the SVS and Stein priors, not {kind!r}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    yy = check_shape(spec, y, "y")
    unit = eps * _unit_stencil(spec)  # (nm, n, m), entry order matches vec
    pts = np.concatenate([yy[..., None, :, :] + unit, yy[..., None, :, :] - unit], axis=-3)
    val, conv, terms = marginal_terms(kind, spec, pts, scale, ctrl)
    d = spec.dim
    diff = (val[..., :d] - val[..., d:]) / (2.0 * eps)
    grad = np.swapaxes(diff.reshape(diff.shape[:-1] + (spec.m, spec.n)), -1, -2)
    return grad, conv.all(axis=-1), terms.max(axis=-1)


def grad_log_marginal(kind: PriorKind, spec: ModelSpec, y, scale: float = 1.0, eps: float = 1e-6,
                      ctrl: SeriesControl = DEFAULT_CONTROL) -> np.ndarray:
    """Entrywise central difference ``(2 eps)^{-1}[log m(Y + eps E_ij) - log m(Y - eps E_ij)]``."""
    grad, conv, terms = grad_terms(kind, spec, y, scale, eps, ctrl)
    _raise_unconverged(conv, terms, "gradient stencil")
    return grad


def _evaluate(f, pts: np.ndarray, vectorized: bool) -> np.ndarray:
    if vectorized:
        return np.asarray(f(pts), dtype=float)
    return np.array([float(f(p)) for p in pts])


def fd_second_differences(f: Callable, point, h: float | None = None, vectorized: bool = False) -> np.ndarray:
    """Matrix of ``[f(X + h E_ia) - 2 f(X) + f(X - h E_ia)] / h^2``.

    Args:
        f: scalar field on ``n x m`` matrices.  With ``vectorized=True`` it
            receives a stack ``(k, n, m)`` and returns ``k`` values.
        h: step; defaults to ``1e-4 (1 + ||X||_F)``.

    Raises:
        DegenerateInputError: ``f`` is not finite on the stencil.
    """
    x = np.asarray(point, dtype=float)
    n, m = x.shape
    if h is None:
        h = 1e-4 * (1.0 + np.linalg.norm(x))
    unit = h * np.eye(n * m).reshape(n * m, n, m)
    pts = np.concatenate([x[None], x + unit, x - unit])
    vals = _evaluate(f, pts, vectorized)
    if not np.all(np.isfinite(vals)):
        raise DegenerateInputError("scalar field is not finite on the finite-difference stencil")
    k = n * m
    second = (vals[1:k + 1] - 2.0 * vals[0] + vals[k + 1:]) / h**2
    return second.reshape(n, m)


def fd_laplacian(f: Callable, point, h: float | None = None, vectorized: bool = False) -> float:
    """Ambient five-point Laplacian of ``f`` at ``point`` in ``R^{n x m}``."""
    return float(np.sum(fd_second_differences(f, point, h, vectorized)))


@dataclass(frozen=True)
class SphereAverage:
    average: float
    center_value: float
    std_error: float

    def superharmonic_ok(self, n_se: float = 3.0) -> bool:
        """``average <= center_value`` up to ``n_se`` Monte Carlo standard errors."""
        return self.average <= self.center_value + n_se * self.std_error


def sphere_average_test(f: Callable, center, radius: float, draws: int, rng: np.random.Generator,
                        vectorized: bool = False) -> SphereAverage:
    """Monte Carlo average of ``f`` over the sphere of given radius around ``center``."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    c = np.asarray(center, dtype=float)
    g = rng.standard_normal((draws,) + c.shape)
    g /= np.sqrt(np.sum(g**2, axis=(-2, -1)))[:, None, None]
    vals = _evaluate(f, c + radius * g, vectorized)
    centre = float(_evaluate(f, c[None], vectorized)[0])
    se = float(np.std(vals, ddof=1) / np.sqrt(draws)) if draws > 1 else math.inf
    return SphereAverage(float(np.mean(vals)), centre, se)


def _check_sigma(sigma) -> np.ndarray:
    s = np.asarray(sigma, dtype=float)
    if np.any(s <= 0):
        raise DegenerateInputError("singular values must be positive")
    if s.size > 1:
        gaps = np.abs(s[:, None] - s[None, :])[np.triu_indices(s.size, 1)]
        if gaps.min() <= 1e-6:
            raise DegenerateInputError("singular values must be pairwise distinct (gap > 1e-6)")
    return s


def sv_laplacian(sigma, spec: ModelSpec, grad, hess_diag) -> float:
    """Laplacian of a function of the singular values only, in singular-value coordinates.

    ``2 sum_{i<j} (s_i g_i - s_j g_j)/(s_i^2 - s_j^2) + (n-m) sum g_i / s_i + sum g_ii``
    where ``g_i`` and ``g_ii`` are the first and second partial derivatives.
    """
    s = _check_sigma(sigma)
    g = np.asarray(grad, dtype=float)
    hd = np.asarray(hess_diag, dtype=float)
    if not (s.shape == g.shape == hd.shape == (spec.m,)):
        raise ValueError("sigma, grad and hess_diag must all have length m")
    cross = 0.0
    for i in range(spec.m):
        for j in range(i + 1, spec.m):
            cross += (s[i] * g[i] - s[j] * g[j]) / (s[i] ** 2 - s[j] ** 2)
    return float(2.0 * cross + (spec.n - spec.m) * np.sum(g / s) + np.sum(hd))


def sv_partials(g: Callable, sigma, h: float = 1e-4):
    """Central-difference first and pure second partials of ``g`` at ``sigma``."""
    s = np.asarray(sigma, dtype=float)
    g0 = g(s)
    grad = np.empty_like(s)
    hess = np.empty_like(s)
    for i in range(s.size):
        e = np.zeros_like(s)
        e[i] = h
        gp, gm = g(s + e), g(s - e)
        grad[i] = (gp - gm) / (2 * h)
        hess[i] = (gp - 2 * g0 + gm) / h**2
    return grad, hess


def metric_det(sigma, spec: ModelSpec) -> float:
    """Determinant of the Euclidean metric in (rotation, singular value) coordinates.

    ``prod_{i<j} (s_i^2 - s_j^2)^2 * prod_i s_i^{2(n-m)}``; exactly 0 when degenerate.
    """
    s = np.asarray(sigma, dtype=float)
    out = float(np.prod(s ** (2 * (spec.n - spec.m))))
    for i in range(s.size):
        for j in range(i + 1, s.size):
            out *= (s[i] ** 2 - s[j] ** 2) ** 2
    return out
