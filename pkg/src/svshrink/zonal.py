"""Zonal polynomials and the confluent hypergeometric function of matrix argument.

Zonal polynomials are Jack polynomials with parameter ``alpha = 2``.  They
are evaluated from eigenvalues with the horizontal-strip recursion

    J_kappa(x_1..x_j) = sum_mu J_mu(x_1..x_{j-1}) x_j^{|kappa|-|mu|} beta(kappa, mu)

whose coefficients depend only on the partitions, so they are computed once
per number of variables and reused for every argument.

Two evaluators exist for ``1F1``:

* ``series``: the truncated sum over partitions (any ``a``, ``b``).
* ``sphere``: for ``a = (m+1)/2``, ``b = (m+2)/2`` only,
  ``etr(-S) 1F1(a; b; S)`` equals the uniform average over the unit sphere of
  the scalar ``1F1(m/2; m/2+1; -u^T S u)``.  This stays accurate for the large
  arguments where the series needs thousands of partitions.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from scipy.special import gammainc, gammaln, multigammaln

from .exceptions import PoleError

ALPHA = 2.0
EIG_CLAMP = 1e-14
SPHERE_MAX_M = 3
_DEFAULT_NODES = {1: 1, 2: 96, 3: 64}


class Partition(tuple):
    """Weakly decreasing tuple of positive integers."""

    def __new__(cls, parts=()):
        parts = tuple(int(p) for p in parts)
        if any(p <= 0 for p in parts):
            raise ValueError(f"partition parts must be positive: {parts}")
        if any(parts[i] < parts[i + 1] for i in range(len(parts) - 1)):
            raise ValueError(f"partition parts must be weakly decreasing: {parts}")
        return super().__new__(cls, parts)

    @property
    def weight(self) -> int:
        return sum(self)

    @property
    def length(self) -> int:
        return len(self)

    def conjugate(self) -> "Partition":
        if not self:
            return Partition()
        return Partition(sum(1 for p in self if p > j) for j in range(self[0]))

    def __repr__(self):
        return f"Partition({tuple(self)})"


@dataclass(frozen=True)
class SeriesControl:
    """Truncation settings for ``1F1``.

    Attributes:
        max_order: largest partition weight summed by the series.
        rel_tol: stop once an order contributes at most ``rel_tol`` times the
            running sum.
        method: ``"series"``, ``"sphere"`` or ``"auto"`` (sphere whenever the
            parameters allow it, series otherwise).
        quad_nodes: Gauss-Legendre nodes per angle for the sphere evaluator;
            0 picks a default per dimension.
    """

    max_order: int = 60
    rel_tol: float = 1e-12
    method: str = "auto"
    quad_nodes: int = 0

    def __post_init__(self):
        if self.max_order < 1:
            raise ValueError("max_order must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.method not in ("auto", "series", "sphere"):
            raise ValueError(f"unknown method {self.method!r}")


DEFAULT_CONTROL = SeriesControl()


@dataclass(frozen=True)
class HypergeometricResult:
    value: float
    log_value: float
    converged: bool
    terms_used: int
    method: str


def partitions_of(k: int, max_length: int, max_part: int | None = None) -> list[Partition]:
    """All partitions of ``k`` with at most ``max_length`` parts, reverse-lexicographic."""
    if k < 0:
        return []
    if max_part is None:
        max_part = k
    if k == 0:
        return [Partition()]
    if max_length <= 0:
        return []
    out = []
    for first in range(min(k, max_part), 0, -1):
        for rest in partitions_of(k - first, max_length - 1, first):
            out.append(Partition((first, *rest)))
    return out


def gen_pochhammer(a: float, kappa, alpha: float = ALPHA) -> float:
    """Generalized Pochhammer symbol ``prod_i prod_{j<kappa_i} (a - (i-1)/alpha + j)``."""
    out = 1.0
    for i, part in enumerate(kappa):
        base = a - i / alpha
        for j in range(part):
            out *= base + j
    return out


def _hooks(kappa: tuple, conj: tuple):
    """Upper and lower hook lengths as ``len(kappa) x kappa_1`` arrays (1 outside)."""
    ell = len(kappa)
    width = kappa[0] if kappa else 0
    i = np.arange(1, ell + 1)[:, None]
    j = np.arange(1, width + 1)[None, :]
    kap = np.asarray(kappa, dtype=float)[:, None]
    kc = np.asarray(conj, dtype=float)[None, :]
    inside = j <= kap
    upper = np.where(inside, kc - i + ALPHA * (kap - j + 1), 1.0)
    lower = np.where(inside, kc - i + 1 + ALPHA * (kap - j), 1.0)
    return upper, lower


@lru_cache(maxsize=None)
def _hook_product(kappa: tuple) -> float:
    """``j_kappa``: product of upper times lower hooks over the diagram."""
    if not kappa:
        return 1.0
    upper, lower = _hooks(kappa, tuple(Partition(kappa).conjugate()))
    return float(np.prod(upper) * np.prod(lower))


def _strip_betas(kappa: tuple, max_len: int):
    """Partitions ``mu`` with ``kappa/mu`` a horizontal strip and ``len(mu) <= max_len``.

    Returns ``(mus, betas)``.
    """
    ell = len(kappa)
    ranges = []
    for i in range(ell):
        lo = kappa[i + 1] if i + 1 < ell else 0
        if i >= max_len:
            if lo > 0:
                return [], np.empty(0)
            ranges.append(np.array([0]))
        else:
            ranges.append(np.arange(lo, kappa[i] + 1))
    grids = np.meshgrid(*ranges, indexing="ij")
    mus = np.stack([g.ravel() for g in grids], axis=1)  # (P, ell)
    width = kappa[0]
    kconj = tuple(Partition(kappa).conjugate())
    jj = np.arange(1, width + 1)
    # conjugate of every mu: mu'_j = #{i : mu_i >= j}
    mconj = (mus[:, :, None] >= jj[None, None, :]).sum(axis=1)  # (P, width)
    equal = mconj == np.asarray(kconj)[None, :]
    k_up, k_low = _hooks(kappa, kconj)
    num = np.prod(np.where(equal[:, None, :], k_up[None], k_low[None]), axis=(1, 2))
    i = np.arange(1, ell + 1)[None, :, None]
    mu_i = mus[:, :, None].astype(float)
    mc = mconj[:, None, :].astype(float)
    inside = jj[None, None, :] <= mu_i
    m_up = np.where(inside, mc - i + ALPHA * (mu_i - jj + 1), 1.0)
    m_low = np.where(inside, mc - i + 1 + ALPHA * (mu_i - jj), 1.0)
    den = np.prod(np.where(equal[:, None, :], m_up, m_low), axis=(1, 2))
    betas = num / den
    parts = [tuple(int(p) for p in row if p > 0) for row in mus]
    return parts, betas


class _JackTable:
    """Partitions with at most ``m`` parts plus the strip transitions between levels.

    Grown one order at a time; shared by all evaluations with the same ``m``.
    """

    def __init__(self, m: int):
        self.m = m
        self.partitions: list[tuple] = [()]
        self.order_slices: list[slice] = [slice(0, 1)]
        self.index: dict[tuple, int] = {(): 0}
        # transitions[level][idx] = (mu indices, exponents, betas)
        self.transitions: list[dict] = [dict() for _ in range(m + 1)]
        self._lock = threading.Lock()

    @property
    def max_order(self) -> int:
        return len(self.order_slices) - 1

    def extend(self, order: int):
        with self._lock:
            while self.max_order < order:
                k = self.max_order + 1
                start = len(self.partitions)
                for kappa in partitions_of(k, self.m):
                    kappa = tuple(kappa)
                    self.index[kappa] = len(self.partitions)
                    self.partitions.append(kappa)
                self.order_slices.append(slice(start, len(self.partitions)))
                for idx in range(start, len(self.partitions)):
                    kappa = self.partitions[idx]
                    for level in range(len(kappa), self.m + 1):
                        mus, betas = _strip_betas(kappa, level - 1)
                        mu_idx = np.array([self.index[mu] for mu in mus], dtype=np.intp)
                        expo = np.array([k - sum(mu) for mu in mus], dtype=float)
                        self.transitions[level][idx] = (mu_idx, expo, betas)


_TABLES: dict[int, _JackTable] = {}
_TABLES_LOCK = threading.Lock()


def _table(m: int, order: int) -> _JackTable:
    with _TABLES_LOCK:
        tab = _TABLES.get(m)
        if tab is None:
            tab = _TABLES[m] = _JackTable(m)
    tab.extend(order)
    return tab


class _JackEvaluator:
    """Evaluates Jack polynomials order by order for a batch of eigenvalue vectors."""

    def __init__(self, x: np.ndarray):
        self.x = x  # (B, m)
        self.m = x.shape[1]
        self.table = _table(self.m, 0)
        # values[level] is a list (indexed by partition index) of (B,) arrays
        self.values = [[np.ones(x.shape[0])] for _ in range(self.m + 1)]
        self.order = 0

    def next_order(self):
        """Advance one order; return ``(partitions, J_top)`` for the new weight."""
        k = self.order + 1
        tab = _table(self.m, k)
        sl = tab.order_slices[k]
        zero = np.zeros(self.x.shape[0])
        for level in range(self.m + 1):
            vals = self.values[level]
            for idx in range(sl.start, sl.stop):
                kappa = tab.partitions[idx]
                if level == 0 or len(kappa) > level:
                    vals.append(zero)
                    continue
                mu_idx, expo, betas = tab.transitions[level][idx]
                prev = self.values[level - 1]
                xj = self.x[:, level - 1]
                acc = zero.copy()
                for mi, e, b in zip(mu_idx, expo, betas):
                    acc += prev[mi] * (b * xj**e)
                vals.append(acc)
        self.order = k
        top = np.stack(self.values[self.m][sl.start:sl.stop], axis=0)
        return tab.partitions[sl.start:sl.stop], top


def jack(kappa, eigenvalues) -> float:
    """Jack polynomial ``J_kappa`` with ``alpha = 2`` at the given eigenvalues."""
    kappa = tuple(Partition(kappa))
    x = np.asarray(eigenvalues, dtype=float).reshape(1, -1)
    if len(kappa) > x.shape[1]:
        return 0.0
    if not kappa:
        return 1.0
    ev = _JackEvaluator(x)
    for _ in range(sum(kappa)):
        parts, top = ev.next_order()
    return float(top[parts.index(kappa), 0])


def zonal(kappa, eigenvalues) -> float:
    """Zonal polynomial ``C_kappa(S)`` from the eigenvalues of ``S``.

    Normalized so that the sum over partitions of ``k`` equals ``(tr S)^k``.
    Partitions longer than the number of eigenvalues give 0.
    """
    kappa = tuple(Partition(kappa))
    k = sum(kappa)
    j = jack(kappa, eigenvalues)
    return ALPHA**k * math.factorial(k) / _hook_product(kappa) * j


def mv_gamma(m: int, a: float) -> float:
    """Multivariate gamma ``Gamma_m(a) = pi^{m(m-1)/4} prod_i Gamma(a - (i-1)/2)``."""
    return math.exp(log_mv_gamma(m, a))


def log_mv_gamma(m: int, a: float) -> float:
    if m < 1:
        raise ValueError("m must be a positive integer")
    if not a > (m - 1) / 2:
        raise ValueError(f"multivariate gamma needs a > (m-1)/2, got a={a}, m={m}")
    return float(multigammaln(a, m))


def _clamp(x):
    x = np.asarray(x, dtype=float)
    return np.where(x < EIG_CLAMP, 0.0, x)


def _series_log(a: float, b: float, x: np.ndarray, ctrl: SeriesControl):
    """Truncated series in log space for a batch ``x`` of shape ``(B, m)``.

    Returns ``(log|F|, sign, converged, terms_used)`` arrays.
    """
    bsz, m = x.shape
    scale = x.max(axis=1)
    scale = np.where(scale > 0, scale, 1.0)
    xs = x / scale[:, None]
    log_scale = np.log(scale)
    ev = _JackEvaluator(xs)
    # accumulate sum_k s_k with s_k = scale^k * inner_k, tracked as sign * exp(log)
    acc_log = np.zeros(bsz)
    acc_sign = np.ones(bsz)
    done = np.all(x == 0, axis=1)
    converged = done.copy()
    terms = np.zeros(bsz, dtype=int)
    for k in range(1, ctrl.max_order + 1):
        if done.all():
            break
        parts, top = ev.next_order()
        inner = np.zeros(bsz)
        for kappa, jvals in zip(parts, top):
            den = gen_pochhammer(b, kappa)
            if den == 0.0:
                raise PoleError(f"(b)_kappa vanishes for b={b}, kappa={kappa}")
            coef = gen_pochhammer(a, kappa) / den * ALPHA**k / _hook_product(kappa)
            inner += coef * jvals
        active = ~done
        terms[active] = k
        with np.errstate(divide="ignore"):
            term_log = k * log_scale + np.log(np.abs(inner))
        term_sign = np.sign(inner)
        # signed log-add of the new order into the accumulator
        hi = np.maximum(acc_log, term_log)
        with np.errstate(invalid="ignore", over="ignore"):
            total = acc_sign * np.exp(acc_log - hi) + term_sign * np.exp(term_log - hi)
        new_sign = np.where(total < 0, -1.0, 1.0)
        with np.errstate(divide="ignore"):
            new_log = hi + np.log(np.abs(total))
        acc_log = np.where(active & np.isfinite(term_log), new_log, acc_log)
        acc_sign = np.where(active & np.isfinite(term_log), new_sign, acc_sign)
        small = term_log <= np.log(ctrl.rel_tol) + acc_log
        newly = active & small
        converged |= newly
        done |= newly
    return acc_log, acc_sign, converged, terms


def _kummer_tail(s: float, x):
    """``1F1(s; s+1; -x)`` for ``x >= 0``; equals ``s x^{-s} gamma_lower(s, x)``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 1.0
    xs = x[small]
    # alternating series s * sum (-x)^k / (k! (s+k)), 1/k! < 1e-25 by k = 25
    acc = np.zeros_like(xs)
    term = np.ones_like(xs)
    for k in range(26):
        acc += term / (s + k)
        term = term * (-xs) / (k + 1)
    out[small] = s * acc
    xl = x[~small]
    out[~small] = np.exp(gammaln(s + 1) - s * np.log(xl)) * gammainc(s, xl)
    return out


@lru_cache(maxsize=None)
def _sphere_nodes(m: int, nodes: int):
    """Directions in the positive orthant of ``S^{m-1}`` with normalized weights."""
    if m == 1:
        return np.ones((1, 1)), np.ones(1)
    t, w = np.polynomial.legendre.leggauss(nodes)
    ang = (t + 1.0) * np.pi / 4.0
    grids = np.meshgrid(*([ang] * (m - 1)), indexing="ij")
    wgrid = np.meshgrid(*([w] * (m - 1)), indexing="ij")
    weight = np.prod(np.stack(wgrid), axis=0)
    # hyperspherical coordinates; peaks of the integrand sit on coordinate axes,
    # which are endpoints of every angular interval
    u = []
    sin_prod = np.ones_like(grids[0])
    for k in range(m - 1):
        u.append(sin_prod * np.cos(grids[k]))
        weight = weight * np.sin(grids[k]) ** (m - 2 - k)
        sin_prod = sin_prod * np.sin(grids[k])
    u.append(sin_prod)
    u2 = np.stack([c.ravel() ** 2 for c in u], axis=1)  # (Q, m)
    weight = weight.ravel()
    return u2, weight / weight.sum()


@numba.njit(cache=True)
def _tail_half_integer(twice_s, t):
    """``1F1(s; s+1; -t)`` for ``s = twice_s / 2``, ``t >= 0``."""
    s = 0.5 * twice_s
    if t < 1.0:
        acc = 0.0
        term = 1.0
        for k in range(26):
            acc += term / (s + k)
            term *= -t / (k + 1)
        return s * acc
    if twice_s == 2:
        return -math.expm1(-t) / t
    if twice_s == 3:
        r = math.sqrt(t)
        return 1.5 * (0.8862269254527580 * math.erf(r) - r * math.exp(-t)) / (t * r)
    # lower incomplete gamma by upward recurrence gamma(a+1) = a gamma(a) - t^a e^-t
    et = math.exp(-t)
    if twice_s % 2 == 0:
        a = 1.0
        g = 1.0 - et
    else:
        a = 0.5
        g = math.sqrt(math.pi) * math.erf(math.sqrt(t))
    while a < s - 0.25:
        g = a * g - t**a * et
        a += 1.0
    return s * g / t**s


@numba.njit(cache=True)
def _sphere_kernel(x, u2, w, twice_s, out):
    bsz, m = x.shape
    q = u2.shape[0]
    for b in range(bsz):
        acc = 0.0
        for k in range(q):
            t = 0.0
            for j in range(m):
                t += x[b, j] * u2[k, j]
            acc += w[k] * _tail_half_integer(twice_s, t)
        out[b] = math.log(acc)


def _sphere_log(x: np.ndarray, nodes: int = 0):
    """``log[etr(-S) 1F1((m+1)/2; (m+2)/2; S)]`` by sphere quadrature; ``x`` is ``(B, m)``."""
    m = x.shape[1]
    nodes = nodes or _DEFAULT_NODES.get(m, 32)
    u2, w = _sphere_nodes(m, nodes)
    out = np.empty(x.shape[0])
    _sphere_kernel(np.ascontiguousarray(x, dtype=float), u2, w, m, out)
    return out


def _sphere_applies(a: float, b: float, m: int) -> bool:
    return m <= SPHERE_MAX_M + 1 and math.isclose(a, (m + 1) / 2) and math.isclose(b, (m + 2) / 2)


def hyp1f1_matrix(a: float, b: float, s_eigenvalues, ctrl: SeriesControl = DEFAULT_CONTROL) -> HypergeometricResult:
    """Confluent hypergeometric function ``1F1(a; b; S)`` of a symmetric matrix argument.

    Args:
        a, b: real parameters.
        s_eigenvalues: eigenvalues of ``S`` (``m`` reals).
        ctrl: truncation settings.  ``method="auto"`` uses the sphere
            evaluator when ``a = (m+1)/2`` and ``b = (m+2)/2``.

    Returns:
        HypergeometricResult with ``value`` (``inf`` on overflow; ``log_value``
        stays finite), the convergence flag and the number of orders summed.

    Raises:
        PoleError: a denominator Pochhammer symbol vanishes.
    """
    x = _clamp(np.atleast_1d(np.asarray(s_eigenvalues, dtype=float)))[None, :]
    m = x.shape[1]
    method = ctrl.method
    if not np.any(x):
        # only the empty partition contributes
        return HypergeometricResult(1.0, 0.0, True, 0, "series" if method == "auto" else method)
    if method == "auto":
        method = "sphere" if (_sphere_applies(a, b, m) and m <= SPHERE_MAX_M) else "series"
    if method == "sphere":
        if not _sphere_applies(a, b, m):
            raise ValueError("sphere evaluator needs a=(m+1)/2, b=(m+2)/2 and m <= 4")
        log_v = float(_sphere_log(x, ctrl.quad_nodes)[0] + x.sum())
        return HypergeometricResult(_safe_exp(log_v), log_v, True, 0, "sphere")
    log_v, sign, conv, terms = _series_log(a, b, x, ctrl)
    value = float(sign[0]) * _safe_exp(float(log_v[0]))
    return HypergeometricResult(value, float(log_v[0]), bool(conv[0]), int(terms[0]), "series")


def _safe_exp(v: float) -> float:
    return math.exp(v) if v < 709.0 else math.inf


def log_etr_hyp1f1(m: int, n: int, s_eigenvalues, ctrl: SeriesControl = DEFAULT_CONTROL):
    """``log[etr(-S) 1F1((m+1)/2; n/2; S)]`` for a batch of eigenvalue vectors.

    This is the data-dependent factor of the prior-integrated density.  For
    ``m = 1`` it is evaluated in closed form, for ``n = m + 2`` by sphere
    quadrature (unless ``ctrl.method == "series"``), otherwise by the series.

    Args:
        s_eigenvalues: array of shape ``(..., m)``.

    Returns:
        ``(log_values, converged, terms_used)`` with the leading shape of the input.
    """
    x = _clamp(s_eigenvalues)
    lead = x.shape[:-1]
    x = x.reshape(-1, m)
    ones = np.ones(x.shape[0], dtype=bool)
    zeros = np.zeros(x.shape[0], dtype=int)
    if ctrl.method != "series" and m == 1:
        # Kummer: etr(-x) 1F1(1; n/2; x) = 1F1(n/2 - 1; n/2; -x)
        out = np.log(_kummer_tail(n / 2.0 - 1.0, x[:, 0]))
        return out.reshape(lead), ones.reshape(lead), zeros.reshape(lead)
    if ctrl.method != "series" and n == m + 2 and m <= SPHERE_MAX_M:
        return _sphere_log(x, ctrl.quad_nodes).reshape(lead), ones.reshape(lead), zeros.reshape(lead)
    if ctrl.method == "sphere":
        raise ValueError(f"sphere evaluator needs n = m + 2 and m <= {SPHERE_MAX_M}")
    log_v, sign, conv, terms = _series_log((m + 1) / 2.0, n / 2.0, x, ctrl)
    return (log_v - x.sum(axis=1)).reshape(lead), conv.reshape(lead), terms.reshape(lead)
