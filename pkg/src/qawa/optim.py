"""Central-difference gradient descent with seeded random restarts."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .simcore import as_rng


@dataclass
class OptimizerConfig:
    iterations: int = 100
    learning_rate: float = 0.05
    restarts: int = 5
    tolerance: float = 1e-10
    fd_step: float = 1e-3
    # step halving on a rejected move keeps the best-so-far trace monotone
    backtrack: bool = True
    min_learning_rate: float = 1e-9

    def to_dict(self):
        return asdict(self)


@dataclass
class OptimizeResult:
    x: np.ndarray
    value: float
    trace: list[float]  # best-so-far value after each iteration, all restarts concatenated
    evaluations: int
    restart_values: list[float]


def fd_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, step: float) -> np.ndarray:
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = step
        g[k] = (f(x + e) - f(x - e)) / (2 * step)
    return g


def minimize_fd(
    f: Callable[[np.ndarray], float],
    dim: int,
    cfg: OptimizerConfig,
    rng,
    init: Callable[[np.random.Generator], np.ndarray] | None = None,
    x0: np.ndarray | None = None,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
) -> OptimizeResult:
    """Minimize ``f`` from ``cfg.restarts`` starting points.

    Restart ``r`` draws its start from ``rng.child(r)``, so results do not
    depend on evaluation order.  Ties between restarts go to the lower index.
    """
    rng = as_rng(rng)
    if init is None:
        init = lambda g: g.uniform(0.0, np.pi, dim)  # noqa: E731
    project = project or (lambda v: v)
    best_x, best_val = None, np.inf
    trace, restart_values, evals = [], [], 0

    for r in range(max(cfg.restarts, 1)):
        if r == 0 and x0 is not None:
            xk = project(np.asarray(x0, dtype=float).copy())
        else:
            xk = project(np.asarray(init(rng.child(r).generator), dtype=float))
        fk = f(xk)
        evals += 1
        lr = cfg.learning_rate
        run_best = fk
        if fk < best_val:
            best_x, best_val = xk.copy(), fk
        for _ in range(cfg.iterations):
            g = fd_gradient(f, xk, cfg.fd_step)
            evals += 2 * dim
            if not np.any(np.abs(g) > 0):
                trace.append(best_val)
                break
            while True:
                cand = project(xk - lr * g)
                fc = f(cand)
                evals += 1
                if fc <= fk or not cfg.backtrack or lr < cfg.min_learning_rate:
                    break
                lr *= 0.5
            improved = fk - fc
            if fc <= fk or not cfg.backtrack:
                xk, fk = cand, fc
            if fk < best_val:
                best_x, best_val = xk.copy(), fk
            run_best = min(run_best, fk)
            trace.append(best_val)
            if lr < cfg.min_learning_rate or abs(improved) < cfg.tolerance:
                break
        restart_values.append(run_best)

    return OptimizeResult(best_x, float(best_val), trace, evals, restart_values)
