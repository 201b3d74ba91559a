"""Empirical copulas, Gaussian reference copulas and comparison metrics.

Pseudo-observations are ``u = rank / N`` with ties broken by a seeded
random permutation, so binary or otherwise discrete marginals still give
distinct ranks.  A grid of resolution ``G`` evaluates the copula CDF at the
points ``k / G`` for ``k = 0..G``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy.stats import multivariate_normal, norm

from .errors import InputError
from .simcore import SampleSet, as_rng


def _as_data(samples) -> np.ndarray:
    if isinstance(samples, SampleSet):
        return samples.bit_array().astype(float)
    x = np.asarray(samples, dtype=float)
    return x[:, None] if x.ndim == 1 else x


@dataclass
class MarginalCdf:
    support: np.ndarray  # sorted distinct values
    cumulative: np.ndarray  # F at each support point

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.support, t, side="right")
        out = np.where(k > 0, self.cumulative[np.maximum(k - 1, 0)], 0.0)
        return float(out) if out.ndim == 0 else out


def empirical_cdf(samples, i: int = 0) -> MarginalCdf:
    data = _as_data(samples)
    if data.shape[0] == 0:
        raise InputError("empty sample")
    col = data[:, i]
    support, counts = np.unique(col, return_counts=True)
    return MarginalCdf(support, np.cumsum(counts) / col.size)


def pseudo_observations(data, rng=None, jitter: bool = True) -> np.ndarray:
    """Column-wise ``rank / N`` in (0, 1]; ties resolved at random when ``jitter``."""
    data = _as_data(data)
    n_obs, n_var = data.shape
    if n_obs < 2:
        raise InputError("need at least two observations")
    rng = as_rng(rng)
    u = np.empty_like(data)
    for j in range(n_var):
        col = data[:, j]
        if jitter:
            key = rng.child(j).generator.permutation(n_obs)
            order = np.lexsort((key, col))
        else:
            order = np.argsort(col, kind="stable")
        ranks = np.empty(n_obs, dtype=np.int64)
        ranks[order] = np.arange(1, n_obs + 1)
        u[:, j] = ranks / n_obs
    return u


def _cell_index(u: np.ndarray, g: int) -> np.ndarray:
    """Cell ``k`` in ``1..G`` such that ``(k-1)/G < u <= k/G``."""
    return np.clip(np.ceil(u * g - 1e-9).astype(np.int64), 1, g)


def grid_cdf_2d(u: np.ndarray, v: np.ndarray, g: int) -> np.ndarray:
    """``C[k, l] = #{U <= k/G, V <= l/G} / N`` for ``k, l = 0..G``."""
    hist = np.zeros((g + 1, g + 1))
    np.add.at(hist, (_cell_index(u, g), _cell_index(v, g)), 1.0)
    return hist.cumsum(axis=0).cumsum(axis=1) / u.size


def cdf_to_cells(c: np.ndarray) -> np.ndarray:
    """Cell masses from a gridded CDF by inclusion-exclusion."""
    return c[1:, 1:] - c[:-1, 1:] - c[1:, :-1] + c[:-1, :-1]


@dataclass
class EmpiricalCopula:
    """Pairwise (or, for two variables, joint) gridded copula."""

    n: int
    g: int
    cdf: dict[tuple[int, int], np.ndarray]
    density: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    n_obs: int = 0
    degenerate: list[int] = field(default_factory=list)
    joint: np.ndarray | None = None

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.g + 1)

    def pair(self, i: int = 0, j: int = 1) -> np.ndarray:
        return self.cdf[(i, j)] if i < j else self.cdf[(j, i)].T

    def evaluate(self, u: float, v: float, i: int = 0, j: int = 1) -> float:
        """Bilinear interpolation of ``C_ij`` at ``(u, v)``."""
        c = self.pair(i, j)
        x, y = np.clip(u, 0, 1) * self.g, np.clip(v, 0, 1) * self.g
        k, l = min(int(x), self.g - 1), min(int(y), self.g - 1)
        fx, fy = x - k, y - l
        return float(
            c[k, l] * (1 - fx) * (1 - fy)
            + c[k + 1, l] * fx * (1 - fy)
            + c[k, l + 1] * (1 - fx) * fy
            + c[k + 1, l + 1] * fx * fy
        )

    def to_csv(self, i: int = 0, j: int = 1) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["u", "v", "C", "density"])
        c = self.pair(i, j)
        dens = self.density.get((min(i, j), max(i, j)))
        for k in range(self.g + 1):
            for l in range(self.g + 1):
                d = ""
                if dens is not None and k > 0 and l > 0:
                    d = f"{dens[k - 1, l - 1] * self.g * self.g:.10g}"
                w.writerow([f"{k / self.g:.10g}", f"{l / self.g:.10g}", f"{c[k, l]:.10g}", d])
        return buf.getvalue()


def empirical_copula(samples, mode: str = "pairwise", g: int = 50, rng=None, density_g: int | None = None) -> EmpiricalCopula:
    data = _as_data(samples)
    n_obs, n = data.shape
    if n_obs < 2:
        raise InputError("need at least two observations")
    degenerate = [j for j in range(n) if np.all(data[:, j] == data[0, j])]
    u = pseudo_observations(data, rng)
    if mode == "joint" and n > 4:
        raise InputError("joint grids are limited to 4 variables")
    cdf, dens = {}, {}
    dg = density_g or g
    for i, j in combinations(range(n), 2):
        cdf[(i, j)] = grid_cdf_2d(u[:, i], u[:, j], g)
        dens[(i, j)] = smoothed_density(u[:, i], u[:, j], dg)
    joint = None
    if mode == "joint":
        hist = np.zeros((g + 1,) * n)
        np.add.at(hist, tuple(_cell_index(u[:, k], g) for k in range(n)), 1.0)
        for ax in range(n):
            hist = hist.cumsum(axis=ax)
        joint = hist / n_obs
    elif mode != "pairwise":
        raise InputError(f"unknown mode {mode!r}")
    return EmpiricalCopula(n, g, cdf, dens, n_obs, degenerate, joint)


def smoothed_density(u: np.ndarray, v: np.ndarray, g: int) -> np.ndarray:
    """Cell probabilities on a ``G x G`` grid with additive ``1/(N G^2)`` smoothing."""
    cells = cdf_to_cells(grid_cdf_2d(u, v, g))
    cells = cells + 1.0 / (u.size * g * g)
    return cells / cells.sum()


# --- Gaussian reference ----------------------------------------------------


@dataclass
class GaussianCopulaSpec:
    r: np.ndarray

    def __post_init__(self):
        self.r = np.atleast_2d(np.asarray(self.r, dtype=float))
        if self.r.shape[0] != self.r.shape[1]:
            raise InputError("correlation matrix must be square")
        if np.max(np.abs(np.diag(self.r) - 1.0)) > 1e-12:
            raise InputError("correlation matrix needs a unit diagonal")
        if np.max(np.abs(self.r - self.r.T)) > 1e-12:
            raise InputError("correlation matrix must be symmetric")
        if np.any(np.abs(self.r[~np.eye(self.r.shape[0], dtype=bool)]) >= 1.0):
            raise InputError("|rho| must be < 1")
        if np.linalg.eigvalsh(self.r).min() < -1e-8:
            raise InputError("correlation matrix is not positive semidefinite")

    @classmethod
    def bivariate(cls, rho: float) -> "GaussianCopulaSpec":
        return cls(np.array([[1.0, rho], [rho, 1.0]]))

    def rho(self, i: int = 0, j: int = 1) -> float:
        return float(self.r[i, j])

    def sample(self, n_obs: int, rng) -> np.ndarray:
        """Uniform-margin draws ``Phi(Z)`` with ``Z ~ N(0, R)``."""
        chol = np.linalg.cholesky(self.r + 1e-14 * np.eye(self.r.shape[0]))
        z = as_rng(rng).generator.standard_normal((n_obs, self.r.shape[0])) @ chol.T
        return norm.cdf(z)


def _phi2(a, b, rho):
    return multivariate_normal(mean=[0.0, 0.0], cov=[[1.0, rho], [rho, 1.0]]).cdf(np.column_stack([a, b]))


def gaussian_copula_cdf_exact(rho: float, u: float, v: float) -> float:
    if abs(rho) >= 1:
        raise InputError("|rho| must be < 1")
    if u <= 0 or v <= 0:
        return 0.0
    if u >= 1:
        return float(min(v, 1.0))
    if v >= 1:
        return float(u)
    return float(np.atleast_1d(_phi2(norm.ppf([u]), norm.ppf([v]), rho))[0])


def gaussian_copula_cdf(spec: GaussianCopulaSpec, u, samples_mc: int = 100_000, rng=None, pair=(0, 1)) -> tuple[float, float]:
    """Monte Carlo ``C(u, v)`` with its binomial standard error."""
    rho = spec.rho(*pair)
    if abs(rho) >= 1:
        raise InputError("|rho| must be < 1")
    two = GaussianCopulaSpec.bivariate(rho).sample(samples_mc, rng)
    hit = (two[:, 0] <= u[0]) & (two[:, 1] <= u[1])
    p = float(hit.mean())
    return p, math.sqrt(max(p * (1 - p), 1e-300) / samples_mc)


def gaussian_grid_cdf(rho: float, g: int) -> np.ndarray:
    """``C(k/G, l/G)`` for the bivariate Gaussian copula, ``k, l = 0..G``."""
    t = np.arange(g + 1) / g
    c = np.zeros((g + 1, g + 1))
    c[g, :] = t
    c[:, g] = t
    inner = norm.ppf(t[1:g])
    if g > 1:
        a, b = np.meshgrid(inner, inner, indexing="ij")
        c[1:g, 1:g] = np.asarray(_phi2(a.ravel(), b.ravel(), rho)).reshape(g - 1, g - 1)
    return c


def gaussian_cell_masses(rho: float, g: int) -> np.ndarray:
    return np.clip(cdf_to_cells(gaussian_grid_cdf(rho, g)), 1e-300, None)


def gaussian_copula_grid(spec: GaussianCopulaSpec, g: int = 50) -> EmpiricalCopula:
    """The reference copula laid out like an empirical estimate."""
    n = spec.r.shape[0]
    cdf, dens = {}, {}
    for i, j in combinations(range(n), 2):
        c = gaussian_grid_cdf(spec.rho(i, j), g)
        cdf[(i, j)] = c
        dens[(i, j)] = cdf_to_cells(c)
    return EmpiricalCopula(n, g, cdf, dens)


# --- metrics ---------------------------------------------------------------


def kl_divergence(p, q) -> float:
    """``sum p log(p / q)`` over cells; both inputs are normalized first."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise InputError(f"shape mismatch {p.shape} vs {q.shape}")
    p, q = p / p.sum(), q / q.sum()
    mask = p > 0
    if np.any(q[mask] <= 0):
        raise InputError("q must be positive wherever p is")
    return float(max(np.sum(p[mask] * np.log(p[mask] / q[mask])), 0.0))


def _trapezoid_mean(d: np.ndarray) -> float:
    w = np.ones(d.shape[0])
    w[0] = w[-1] = 0.5
    g = d.shape[0] - 1
    return float(w @ d @ w) / (g * g)


def grid_l1(c1: np.ndarray, c2: np.ndarray) -> float:
    """``int int |C1 - C2| du dv`` by the trapezoid rule on a shared grid."""
    if c1.shape != c2.shape:
        raise InputError(f"shape mismatch {c1.shape} vs {c2.shape}")
    return _trapezoid_mean(np.abs(c1 - c2))


def copula_distance(c1: EmpiricalCopula, c2: EmpiricalCopula) -> float:
    """L1 distance between copula CDFs, averaged over the shared pairs."""
    if c1.g != c2.g or set(c1.cdf) != set(c2.cdf):
        raise InputError("copulas must share grid and pairs")
    return float(np.mean([grid_l1(c1.cdf[k], c2.cdf[k]) for k in sorted(c1.cdf)]))


def pairwise_correlations(samples) -> np.ndarray:
    data = _as_data(samples)
    if data.shape[0] < 2:
        raise InputError("need at least two observations")
    sd = data.std(axis=0)
    if np.any(sd <= 0):
        raise InputError(f"zero-variance variables: {np.flatnonzero(sd <= 0).tolist()}")
    c = np.corrcoef(data, rowvar=False)
    c = (c + c.T) / 2
    np.fill_diagonal(c, 1.0)
    return c


def dkw_bound(k: int, eps: float, n: int = 1) -> float:
    """``2^n exp(-2 K eps^2)``."""
    if k < 1 or eps <= 0:
        raise InputError("need K >= 1 and eps > 0")
    return float(2.0**n * math.exp(-2.0 * k * eps * eps))


def sup_deviation_2d(u: np.ndarray, v: np.ndarray, cdf_true, g: int) -> float:
    """Upper bound on ``sup |F_K - F|`` for uniform-margin data.

    The grid maximum plus ``2 / G`` covers the between-node slack because
    both CDFs are monotone and ``F`` has uniform margins.
    """
    grid = np.arange(g + 1) / g
    emp = grid_cdf_2d(u, v, g)
    true = cdf_true(grid[:, None], grid[None, :])
    return float(np.max(np.abs(emp - true)) + 2.0 / g)


def joint_empirical_cdf(data: np.ndarray, point) -> float:
    data = _as_data(data)
    return float(np.mean(np.all(data <= np.asarray(point, dtype=float), axis=1)))


def sklar_recompose(c: EmpiricalCopula, marginals: list[MarginalCdf], x) -> float:
    """Joint CDF ``C(F_1(x_1), F_2(x_2))`` for a bivariate copula."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if len(marginals) != c.n or x.size != c.n:
        raise InputError("dimension mismatch between copula, marginals and point")
    if c.n != 2:
        raise InputError("recomposition is implemented for bivariate copulas")
    u = [m(xi) for m, xi in zip(marginals, x)]
    return c.evaluate(u[0], u[1])


def write_copula_csv(path, c: EmpiricalCopula, i: int = 0, j: int = 1, header_comment: str | None = None) -> None:
    text = c.to_csv(i, j)
    if header_comment:
        text = f"# {header_comment}\n" + text
    Path(path).write_text(text, encoding="utf-8")
