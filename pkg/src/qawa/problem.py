"""Portfolio data, QUBO construction and the Ising mapping.

Spin convention: the QUBO assignment and the Ising spin are related by
``x = (z + 1) / 2``, and ``z`` is the Pauli-Z eigenvalue of the qubit.  A
qubit measured as ``|0>`` therefore reads ``z = +1`` and ``x = 1``; use
:func:`assignment_from_bits` to convert measured bits to assignments.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError
from .simcore import basis_bits

MAX_BRUTE_FORCE = 24


@dataclass
class ReturnsMatrix:
    assets: list[str]
    returns: np.ndarray  # (assets, days)


@dataclass
class PortfolioSpec:
    mu: np.ndarray
    sigma: np.ndarray
    lam: float = 0.5
    assets: list[str] | None = None

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float).reshape(-1)
        self.sigma = np.asarray(self.sigma, dtype=float)
        n = self.mu.size
        if self.sigma.shape != (n, n):
            raise InputError(f"mu has {n} entries but sigma has shape {self.sigma.shape}")
        if not 0.0 <= self.lam <= 1.0:
            raise InputError(f"risk aversion must lie in [0, 1], got {self.lam}")
        if np.max(np.abs(self.sigma - self.sigma.T), initial=0.0) > 1e-10:
            raise InputError("covariance must be symmetric")
        if np.linalg.eigvalsh(self.sigma).min() < -1e-8:
            raise InputError("covariance must be positive semidefinite")

    def to_dict(self) -> dict:
        return {
            "assets": list(self.assets) if self.assets else [f"A{i}" for i in range(self.mu.size)],
            "lambda": self.lam,
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PortfolioSpec":
        return cls(np.array(d["mu"]), np.array(d["sigma"]), float(d.get("lambda", 0.5)), d.get("assets"))


@dataclass
class QuboProblem:
    q: np.ndarray

    def __post_init__(self):
        self.q = np.atleast_2d(np.asarray(self.q, dtype=float))
        if self.q.shape[0] != self.q.shape[1]:
            raise InputError("QUBO matrix must be square")
        if np.max(np.abs(self.q - self.q.T), initial=0.0) > 1e-10:
            raise InputError("QUBO matrix must be symmetric")

    @property
    def n(self) -> int:
        return self.q.shape[0]


@dataclass
class IsingModel:
    """``E(z) = sum_{i<j} J_ij z_i z_j + sum_i h_i z_i + offset``.

    ``j`` is stored as a full symmetric matrix with zero diagonal; each
    unordered pair is counted once.
    """

    j: np.ndarray
    h: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        self.j = np.atleast_2d(np.asarray(self.j, dtype=float))
        self.h = np.asarray(self.h, dtype=float).reshape(-1)
        if np.any(np.abs(np.diag(self.j)) > 0):
            raise InputError("Ising couplings must have zero diagonal")

    @property
    def n(self) -> int:
        return self.h.size

    def energy(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.j @ z + self.h @ z + self.offset)

    def basis_energies(self) -> np.ndarray:
        """Classical energy of every basis index (``z_q = 1 - 2 * bit_q``)."""
        z = 1.0 - 2.0 * basis_bits(self.n)
        return 0.5 * np.einsum("ki,ij,kj->k", z, self.j, z) + z @ self.h + self.offset

    def restrict(self, subset) -> "IsingModel":
        """Sub-model on ``subset``; couplings to the remaining spins are dropped."""
        s = list(subset)
        return IsingModel(self.j[np.ix_(s, s)], self.h[s], 0.0)

    def scaled(self, factor: float) -> "IsingModel":
        return IsingModel(self.j * factor, self.h * factor, self.offset * factor)


# --- data ingestion --------------------------------------------------------


def read_price_csv(path) -> tuple[list[str], list[str], np.ndarray]:
    """Parse ``date,TICKER1,...`` price CSV; returns (dates, tickers, prices[assets, days])."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_price_csv(text)


def parse_price_csv(text: str) -> tuple[list[str], list[str], np.ndarray]:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    if not rows:
        raise InputError("price CSV is empty")
    header = [c.strip() for c in rows[0]]
    if len(header) < 2 or header[0].lower() != "date":
        raise InputError("line 1: header must start with 'date' followed by tickers")
    tickers = header[1:]
    dates, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise InputError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            vals = [float(v) for v in row[1:]]
        except ValueError:
            raise InputError(f"line {lineno}: non-numeric or missing price") from None
        if any(math.isnan(v) for v in vals):
            raise InputError(f"line {lineno}: missing price")
        dates.append(row[0].strip())
        values.append(vals)
    return dates, tickers, np.array(values).T


def write_price_csv(path, dates, tickers, prices: np.ndarray, header_comment: str | None = None) -> None:
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", *tickers])
    for t, d in enumerate(dates):
        w.writerow([d, *(f"{p:.10g}" for p in prices[:, t])])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def log_returns(prices, assets=None) -> ReturnsMatrix:
    p = np.atleast_2d(np.asarray(prices, dtype=float))
    if p.shape[1] < 2:
        raise InputError("need at least two days of prices")
    if np.any(p <= 0):
        bad = np.argwhere(p <= 0)[0]
        raise InputError(f"nonpositive price for asset {bad[0]} on day {bad[1]}")
    assets = list(assets) if assets is not None else [f"A{i}" for i in range(p.shape[0])]
    return ReturnsMatrix(assets, np.log(p[:, 1:] / p[:, :-1]))


def standardize(r: ReturnsMatrix) -> ReturnsMatrix:
    """Subtract each row's mean and divide by its sample std (divisor N-1)."""
    x = np.asarray(r.returns, dtype=float)
    sd = x.std(axis=1, ddof=1, keepdims=True)
    if np.any(~(sd > 1e-15)):
        rows = [r.assets[i] for i in np.flatnonzero(~(sd[:, 0] > 1e-15))]
        raise InputError(f"zero-variance return series: {', '.join(rows)}")
    return ReturnsMatrix(list(r.assets), (x - x.mean(axis=1, keepdims=True)) / sd)


def portfolio_from_returns(r: ReturnsMatrix, lam: float = 0.5) -> PortfolioSpec:
    x = np.asarray(r.returns, dtype=float)
    sigma = np.atleast_2d(np.cov(x, ddof=1))
    return PortfolioSpec(x.mean(axis=1), (sigma + sigma.T) / 2, lam, list(r.assets))


# --- QUBO / Ising ----------------------------------------------------------


def build_portfolio_qubo(spec: PortfolioSpec) -> QuboProblem:
    """``H(x) = lam x^T Sigma x - (1 - lam) mu^T x`` as a symmetric Q (uses x_i^2 = x_i)."""
    q = spec.lam * spec.sigma.copy()
    q[np.diag_indices_from(q)] -= (1.0 - spec.lam) * spec.mu
    return QuboProblem(q)


def evaluate(q: QuboProblem, x) -> float:
    x = np.asarray([int(b) for b in x] if isinstance(x, str) else x, dtype=float)
    if x.size != q.n:
        raise InputError(f"assignment has {x.size} entries, QUBO has {q.n}")
    return float(x @ q.q @ x)


def qubo_to_ising(q: QuboProblem) -> IsingModel:
    """Substitute ``x = (z + 1) / 2`` and collect terms."""
    m = q.q
    if np.max(np.abs(m - m.T), initial=0.0) > 1e-10:
        raise InputError("QUBO matrix must be symmetric")
    j = m / 2.0
    np.fill_diagonal(j, 0.0)
    h = m.sum(axis=1) / 2.0
    offset = (m.sum() + np.trace(m)) / 4.0
    return IsingModel(j, h, float(offset))


def assignment_from_bits(bits) -> np.ndarray:
    """Measured qubit bits -> QUBO assignment (``|0>`` means ``x = 1``)."""
    b = np.asarray([int(c) for c in bits] if isinstance(bits, str) else bits, dtype=np.int64)
    return 1 - b


def qubo_energies(q: QuboProblem) -> np.ndarray:
    """``x^T Q x`` for every assignment, indexed by ``sum_i x_i 2^i``."""
    if q.n > MAX_BRUTE_FORCE:
        raise InputError(f"exhaustive enumeration limited to n <= {MAX_BRUTE_FORCE}")
    x = basis_bits(q.n).astype(float)
    return np.einsum("ki,ij,kj->k", x, q.q, x)


def brute_force_optimum(q: QuboProblem) -> tuple[str, float]:
    """Global minimizer; ties go to the smallest ``sum_i x_i 2^i``.  String is x_0 first."""
    e = qubo_energies(q)
    k = int(np.argmin(e))  # argmin returns the first (lowest-index) minimizer
    return "".join(str((k >> i) & 1) for i in range(q.n)), float(e[k])


def spectrum_bounds(q: QuboProblem) -> tuple[float, float]:
    e = qubo_energies(q)
    return float(e.min()), float(e.max())


def approximation_ratio(energy: float, optimum: float, worst: float) -> float:
    """Min-max normalized quality: 1 at the optimum, 0 at the worst assignment."""
    span = worst - optimum
    if abs(span) < 1e-15:
        return 1.0
    return float((worst - energy) / span)


def synthetic_portfolio(n: int, rng, days: int = 252, lam: float = 0.5) -> PortfolioSpec:
    """Random correlated-returns portfolio used by benchmarks and tests.

    Returns are annualized-scale (drifts ~ 0.1, vols ~ 0.2) so that the
    risk and return terms of the QUBO are of comparable size.
    """
    g = rng.generator
    loadings = g.normal(size=(n, 2)) * 0.6
    corr = loadings @ loadings.T + np.diag(g.uniform(0.3, 1.0, n))
    d = np.sqrt(np.diag(corr))
    corr = corr / np.outer(d, d)
    vol = g.uniform(0.1, 0.4, n)
    cov = corr * np.outer(vol, vol)
    drift = g.uniform(0.0, 0.3, n)
    rets = g.multivariate_normal(drift, cov, size=days, method="cholesky").T
    sigma = np.cov(rets, ddof=1)
    return PortfolioSpec(rets.mean(axis=1), (sigma + sigma.T) / 2, lam)


def equicorrelation(n: int, rho: float) -> np.ndarray:
    r = np.full((n, n), float(rho))
    np.fill_diagonal(r, 1.0)
    if not -1.0 < rho < 1.0:
        raise InputError(f"|rho| must be < 1, got {rho}")
    if np.linalg.eigvalsh(r).min() < -1e-12:
        raise InputError(f"rho={rho} is infeasible for {n} assets (needs rho >= {-1.0 / (n - 1):.4g})")
    return r


def synthetic_prices(rho: float, assets: int, days: int, rng, vol: float = 0.01, start: float = 100.0):
    """Price paths whose daily log-returns are equicorrelated Gaussians.

    Returns ``(dates, tickers, prices[assets, days + 1])``; dates are
    ``t0000``-style day labels.
    """
    if assets < 1 or days < 2:
        raise InputError("need at least one asset and two days")
    r = equicorrelation(assets, rho)
    chol = np.linalg.cholesky(r + 1e-13 * np.eye(assets))
    z = rng.generator.standard_normal((days, assets)) @ chol.T
    logp = np.log(start) + np.vstack([np.zeros(assets), np.cumsum(vol * z, axis=0)])
    width = max(4, len(str(days)))
    dates = [f"t{k:0{width}d}" for k in range(days + 1)]
    return dates, [f"S{i}" for i in range(assets)], np.exp(logp).T
