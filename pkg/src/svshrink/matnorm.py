"""Matrix-variate Normal model with isotropic row covariance.

Only ``N_{n,m}(M, v I_n, I_m)`` is represented: every experiment in the
package reduces to this case, and ``vec(X)`` is then ``N(vec(M), v I_{nm})``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class ModelSpec:
    """Problem dimensions and covariance scales.

    Attributes:
        n: number of rows.
        m: number of columns; ``n - m >= 2`` is required.
        v1: row-covariance scale of the observation.
        v2: row-covariance scale of the future observation.
    """

    n: int
    m: int
    v1: float = 1.0
    v2: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or int(self.m) != self.m or self.m < 1:
            raise ValueError(f"n and m must be positive integers, got n={self.n}, m={self.m}")
        if self.n - self.m < 2:
            raise ValueError(f"n - m >= 2 is required, got n={self.n}, m={self.m}")
        if not (self.v1 > 0 and self.v2 > 0):
            raise ValueError(f"v1 and v2 must be positive, got v1={self.v1}, v2={self.v2}")

    @property
    def v0(self) -> float:
        """Variance of the sufficient statistic combining both observations."""
        return self.v1 * self.v2 / (self.v1 + self.v2)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.m)

    @property
    def dim(self) -> int:
        return self.n * self.m


def check_shape(spec: ModelSpec, x, name="matrix") -> np.ndarray:
    """Return ``x`` as a float array whose trailing two axes are ``(n, m)``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim < 2 or arr.shape[-2:] != spec.shape:
        raise ValueError(f"{name} must have trailing shape {spec.shape}, got {arr.shape}")
    return arr


def vec(x: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization (Fortran order)."""
    return np.asarray(x, dtype=float).reshape(-1, order="F")


def unvec(v: np.ndarray, n: int, m: int) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape((n, m), order="F")


def replication_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Independent stream addressed by ``(master_seed, *keys)``.

    Streams depend only on the key tuple, so results do not depend on the
    order in which replications are executed.
    """
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, keys)]))


def sample(spec: ModelSpec, mean, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Draw one ``N_{n,m}(mean, scale I_n, I_m)`` matrix."""
    if not scale >= 0:
        raise ValueError(f"scale must be nonnegative, got {scale}")
    mean = check_shape(spec, mean, "mean")
    return mean + np.sqrt(scale) * rng.standard_normal(spec.shape)


def log_density(spec: ModelSpec, x, mean, scale: float):
    """Log-density of ``N_{n,m}(mean, scale I_n, I_m)`` at ``x``.

    Broadcasts over leading axes of ``x`` and ``mean``.
    """
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    x = check_shape(spec, x, "x")
    mean = check_shape(spec, mean, "mean")
    sq = np.sum((x - mean) ** 2, axis=(-2, -1))
    return -0.5 * spec.dim * (LOG_2PI + np.log(scale)) - sq / (2.0 * scale)


def svd(x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full singular value decomposition ``x = U Sigma V^T``.

    Returns ``U`` (n x n), the ``m`` singular values in descending order and
    ``V`` (m x m). Each column of ``U`` is flipped so that its first nonzero
    entry is positive; the matching column of ``V`` is flipped with it.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {x.shape}")
    n, m = x.shape
    u, s, vt = np.linalg.svd(x, full_matrices=True)
    v = vt.T.copy()
    for j in range(n):
        col = u[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-14)
        if nz.size and col[nz[0]] < 0:
            u[:, j] = -col
            if j < min(n, m):
                v[:, j] = -v[:, j]
    sigma = np.zeros(m)
    sigma[: s.size] = s
    return u, sigma, v


def singular_values(x) -> np.ndarray:
    """Singular values along the trailing two axes, descending."""
    return np.linalg.svd(np.asarray(x, dtype=float), compute_uv=False)


def compose(u: np.ndarray, sigma, v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`svd`: build ``U diag(sigma) V^T`` of shape ``(n, m)``."""
    n, m = u.shape[0], v.shape[0]
    block = np.zeros((n, m))
    block[:m, :m] = np.diag(sigma)
    return u @ block @ v.T
