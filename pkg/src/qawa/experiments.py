"""Scripted experiments emitting plot-ready tables.

Every run is a deterministic function of its config and an
:class:`~qawa.simcore.RngStream`; independent pieces (seeds, trials)
draw from distinct child streams, so fanning them out over worker
processes does not change any number.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy import optimize, stats

from .arith import cascade_effective, cascade_expectation, encode_ket, single_block_expectation
from .copula import (
    gaussian_cell_masses,
    gaussian_grid_cdf,
    grid_cdf_2d,
    grid_l1,
    kl_divergence,
    pseudo_observations,
    smoothed_density,
)
from .errors import InputError, NumericalError
from .metrics import ValidationReport, build_validation_report
from .optim import OptimizerConfig, fd_gradient
from .oracle import (
    Batch,
    QawaOracle,
    TargetSpec,
    TrainingConfig,
    default_encoder,
    posterior_summary,
    qawa_energy,
    train,
    train_weights,
)
from .problem import (
    MAX_BRUTE_FORCE,
    IsingModel,
    QuboProblem,
    approximation_ratio,
    build_portfolio_qubo,
    qubo_to_ising,
    synthetic_portfolio,
)
from .qaoa import optimize_qaoa
from .simcore import as_rng, basis_bits

# --- output helpers --------------------------------------------------------


def config_hash(cfg) -> str:
    """Short sha256 of the canonical JSON form of ``cfg``."""
    d = cfg if isinstance(cfg, dict) else asdict(cfg)
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    raise TypeError(f"not serializable: {type(v).__name__}")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def csv_text(header: list[str], rows, cfg_hash: str, seed: int) -> str:
    buf = io.StringIO()
    buf.write(f"# config_hash={cfg_hash}, seed={seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def write_csv(path, header, rows, cfg_hash: str, seed: int) -> None:
    Path(path).write_text(csv_text(header, rows, cfg_hash, seed), encoding="utf-8")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n"


def _map(fn, args: list, workers: int) -> list:
    if workers <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*args)))


# --- copula learning -------------------------------------------------------


@dataclass
class CopulaExperimentConfig:
    """Four assets in two sectors driven by two sector factors.

    Asset ``i`` mixes its idiosyncratic noise, its own sector factor and
    the negated other-sector factor through a two-block cascade.  The
    ground truth is the cascade at ``true_cross`` with intra-sector
    correlation ``rho``.
    """

    rho: float = 0.7
    true_cross: float = 0.1
    n_obs: int = 20_000
    iterations: int = 150
    learning_rate: float = 0.5
    fd_step: float = 1e-4
    init_weight: float = 0.5
    input_scale: float = 4.0
    kl_grid: int = 10
    distance_grid: int = 50
    circuit_checks: int = 8

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise InputError("intra-sector rho must lie in (0, 1)")
        if not 0.0 < self.true_cross < 1.0:
            raise InputError("true_cross must lie in (0, 1)")
        for k in ("n_obs", "iterations", "kl_grid", "distance_grid"):
            if getattr(self, k) < 1:
                raise InputError(f"{k} must be positive")
        if self.n_obs < 10:
            raise InputError("n_obs too small")


N_ASSETS = 4
SECTOR = (0, 0, 1, 1)


def asset_inputs(latents: np.ndarray, scale: float) -> np.ndarray:
    """(N, 4, 3) cascade inputs: idiosyncratic, own sector, negated other sector.

    ``latents`` columns are ``F_A, F_B, e_0..e_3``; values are divided by
    ``scale`` and clipped into the encodable range ``[-1, 1]``.
    """
    v = np.clip(latents / scale, -1.0, 1.0)
    out = np.empty((v.shape[0], N_ASSETS, 3))
    for i, s in enumerate(SECTOR):
        out[:, i, 0] = v[:, 2 + i]
        out[:, i, 1] = v[:, s]
        out[:, i, 2] = -v[:, 1 - s]
    return out


def cascade_outputs(inputs: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Accumulator values ``s`` (N, 4) of each asset's two-block cascade."""
    w = np.asarray(weights, dtype=float).reshape(N_ASSETS, 2)
    s = inputs[:, :, 0]
    for k in range(2):
        s = w[:, k] * s + (1.0 - w[:, k]) * inputs[:, :, k + 1]
    return s


def _effective(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float).reshape(N_ASSETS, 2)
    return np.array([cascade_effective(row).effective for row in w])


def model_correlation(weights) -> np.ndarray:
    """Population correlation of the cascade outputs under unit-variance latents."""
    eff = _effective(weights)
    load = np.zeros((N_ASSETS, 6))
    for i, s in enumerate(SECTOR):
        load[i, 2 + i] = eff[i, 0]
        load[i, s] = eff[i, 1]
        load[i, 1 - s] = -eff[i, 2]
    cov = load @ load.T
    d = np.sqrt(np.diag(cov))
    return cov / np.outer(d, d)


def true_weights(rho: float, cross: float) -> np.ndarray:
    """Cascade weights whose intra-sector correlation is ``rho``.

    The last block keeps ``1 - cross`` of the accumulator; the first block's
    weight is solved so that ``(b^2 + c^2) / (a^2 + b^2 + c^2) = rho``.
    """
    w1 = 1.0 - cross
    c = cross

    def gap(w0):
        a, b = w0 * w1, (1 - w0) * w1
        return (b * b + c * c) / (a * a + b * b + c * c) - rho

    lo_gap, hi_gap = gap(1.0 - 1e-12), gap(1e-12)
    if lo_gap > 0 or hi_gap < 0:
        raise InputError(f"rho={rho} unreachable with cross weight {cross}")
    w0 = optimize.brentq(gap, 1e-12, 1.0 - 1e-12, xtol=1e-15)
    return np.tile([w0, w1], N_ASSETS)


def _pairs():
    return list(combinations(range(N_ASSETS), 2))


def _corr_loss(weights, inputs, r_true) -> float:
    c = np.corrcoef(cascade_outputs(inputs, weights), rowvar=False)
    return float(sum((c[i, j] - r_true[i, j]) ** 2 for i, j in _pairs()))


def run_copula_experiment(cfg: CopulaExperimentConfig | None = None, rng=None) -> dict:
    """Learn cascade weights matching a Gaussian copula; trace KL and distance.

    The learned copula is the rank copula of the activated outputs (the
    activation is monotone, so it leaves the copula unchanged).  KL uses
    ``kl_grid`` cells per axis against exact Gaussian cell masses, and the
    distance is the grid L1 gap of the CDFs on ``distance_grid``; both are
    averaged over the six pairs.
    """
    cfg = cfg or CopulaExperimentConfig()
    rng = as_rng(rng)
    w_true = true_weights(cfg.rho, cfg.true_cross)
    r_true = model_correlation(w_true)
    latents = rng.child(0).generator.standard_normal((cfg.n_obs, 6))
    inputs = asset_inputs(latents, cfg.input_scale)
    enc = default_encoder()

    ref_cells = {p: gaussian_cell_masses(r_true[p], cfg.kl_grid) for p in _pairs()}
    ref_cdf = {p: gaussian_grid_cdf(r_true[p], cfg.distance_grid) for p in _pairs()}

    def fidelity(w, t):
        y = enc.activate(cascade_outputs(inputs, w))
        u = pseudo_observations(y, rng.child(1, t))
        kl = np.mean([kl_divergence(smoothed_density(u[:, i], u[:, j], cfg.kl_grid), ref_cells[(i, j)])
                      for i, j in _pairs()])
        dist = np.mean([grid_l1(grid_cdf_2d(u[:, i], u[:, j], cfg.distance_grid), ref_cdf[(i, j)])
                        for i, j in _pairs()])
        return float(kl), float(dist), np.corrcoef(y, rowvar=False)

    f = lambda w: _corr_loss(w, inputs, r_true)  # noqa: E731
    w = np.full(2 * N_ASSETS, cfg.init_weight)
    best_w, best_l = w.copy(), f(w)
    rows = []
    for t in range(cfg.iterations + 1):
        kl, dist, corr = fidelity(w, t)
        lt = f(w)
        if lt < best_l:
            best_w, best_l = w.copy(), lt
        rows.append({"iter": t, "loss": lt, "kl": kl, "distance": dist,
                     "correlations": [float(corr[i, j]) for i, j in _pairs()]})
        if t == cfg.iterations:
            break
        w = np.clip(w - cfg.learning_rate * fd_gradient(f, w, cfg.fd_step), 0.0, 1.0)

    # circuit cross-check of the classical recursion on a few observations
    idx = rng.child(2).generator.choice(cfg.n_obs, size=min(cfg.circuit_checks, cfg.n_obs), replace=False)
    s_classical = cascade_outputs(inputs[idx], w)
    wr = w.reshape(N_ASSETS, 2)
    s_circuit = np.array([[cascade_expectation(inputs[k, i], wr[i], mode="dephased") for i in range(N_ASSETS)]
                          for k in idx])
    kl_best = np.minimum.accumulate([r["kl"] for r in rows])
    return {
        "trace": rows,
        "best_kl": kl_best.tolist(),
        "final_kl": rows[-1]["kl"],
        "final_distance": rows[-1]["distance"],
        "final_correlations": rows[-1]["correlations"],
        "target_correlations": [float(r_true[i, j]) for i, j in _pairs()],
        "pairs": [list(p) for p in _pairs()],
        "weights": w.tolist(),
        "best_weights": best_w.tolist(),
        "true_weights": w_true.tolist(),
        "circuit_max_deviation": float(np.max(np.abs(s_classical - s_circuit))),
    }


def copula_trace_rows(result: dict):
    return [[r["iter"], r["kl"], r["distance"]] for r in result["trace"]]


# --- correlation analysis --------------------------------------------------


@dataclass
class CorrelationExperimentConfig:
    n_qubits: int = 8
    samples: int = 1000
    trials: int = 5
    weight: float = 0.5
    xi: float = 0.5
    depths: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4, 5, 6, 7, 8])
    xis: list[float] = field(default_factory=lambda: [0.25, 0.5, 1.0])
    weights: list[float] = field(default_factory=lambda: [0.25, 0.5, 0.75])

    def __post_init__(self):
        for k in ("n_qubits", "samples", "trials"):
            if getattr(self, k) < 1:
                raise InputError(f"{k} must be positive")
        if self.samples < 2:
            raise InputError("need at least two samples")
        if not self.depths:
            raise InputError("depth list must be nonempty")
        if any(d < 0 for d in self.depths):
            raise InputError("depths must be nonnegative")
        for x in [self.xi, *self.xis]:
            if not 0.0 <= x <= 1.0:
                raise InputError("xi must lie in [0, 1]")
        for w in [self.weight, *self.weights]:
            if not 0.0 <= w <= 1.0:
                raise InputError("weights must lie in [0, 1]")


def attenuation_factors(weight: float, n: int) -> np.ndarray:
    """``prod_{k<m} w_k`` for ``m = 1..n`` under a uniform weight."""
    return np.array([cascade_effective(np.full(m - 1, weight)).effective[0] for m in range(1, n + 1)])


def run_attenuation_analysis(cfg: CorrelationExperimentConfig | None = None, rng=None) -> list[dict]:
    """First-input influence on the accumulator after ``m`` inputs.

    Each trial draws the other inputs as random basis states, runs the
    coherent cascade with the first input at ``+1`` and ``-1``, and
    estimates both accumulator expectations from ``samples`` shots.  Half
    the difference estimates the analytic factor.
    """
    cfg = cfg or CorrelationExperimentConfig()
    if not 0.0 < cfg.weight <= 1.0:
        raise InputError("attenuation needs w in (0, 1]")
    rng = as_rng(rng)
    analytic = attenuation_factors(cfg.weight, cfg.n_qubits)
    out = []
    for m in range(1, cfg.n_qubits + 1):
        g = rng.child(m).generator
        w = np.full(m - 1, cfg.weight)
        est, var = [], []
        for _ in range(cfg.trials):
            rest = g.choice([-1.0, 1.0], size=m - 1)
            sp = cascade_expectation(np.r_[1.0, rest], w, mode="coherent")
            sm = cascade_expectation(np.r_[-1.0, rest], w, mode="coherent")
            zp = 2.0 * g.binomial(cfg.samples, (1 + sp) / 2) / cfg.samples - 1.0
            zm = 2.0 * g.binomial(cfg.samples, (1 + sm) / 2) / cfg.samples - 1.0
            est.append((zp - zm) / 2)
            var.append(((1 - sp * sp) + (1 - sm * sm)) / (4 * cfg.samples))
        sigma = math.sqrt(np.mean(var) / cfg.trials)
        out.append({"m": m, "analytic": float(analytic[m - 1]), "measured": float(np.mean(est)), "sigma": sigma})
    return out


VARIANCE_STATISTIC = "sum_i Z_i x_i / 4 over n blocks fed (x_i, -x_i), x_i uniform on {-1, +1}"


def variance_prediction(weight: float, n: int) -> float:
    return weight * (1.0 - weight) * n / 4.0


def _variance_of_variance(weight: float, n: int, samples: int) -> float:
    v1 = weight * (1 - weight) / 4
    m4 = weight * (1 - weight) * (1 - 3 * weight + 3 * weight * weight) / 16
    mu4 = n * m4 + 3 * n * (n - 1) * v1 * v1
    var = n * v1
    return float((mu4 - var * var * (samples - 3) / (samples - 1)) / samples)


def run_variance_analysis(cfg: CorrelationExperimentConfig | None = None, rng=None) -> list[dict]:
    """Monte-Carlo variance of the summed block readouts per weight.

    Block ``i`` is one weighted-sum gate on inputs ``(x_i, -x_i)``; its
    accumulator reading ``Z_i`` aligned by ``x_i`` is ``+1`` with
    probability ``w``.  The statistic is :data:`VARIANCE_STATISTIC`.
    """
    cfg = cfg or CorrelationExperimentConfig()
    rng = as_rng(rng)
    n = cfg.n_qubits
    out = []
    for wi, w in enumerate(cfg.weights):
        # ⟨Z⟩ of the accumulator for the two input signs
        z_mean = {x: single_block_expectation(x, -x, w) for x in (-1.0, 1.0)}
        trial_vars = []
        for t in range(cfg.trials):
            g = rng.child(wi, t).generator
            x = g.choice([-1.0, 1.0], size=(cfg.samples, n))
            p_plus = np.where(x > 0, (1 + z_mean[1.0]) / 2, (1 + z_mean[-1.0]) / 2)
            z = np.where(g.random((cfg.samples, n)) < p_plus, 1.0, -1.0)
            stat = (z * x).sum(axis=1) / 4.0
            trial_vars.append(float(stat.var(ddof=1)))
        pred = variance_prediction(w, n)
        sigma = math.sqrt(max(_variance_of_variance(w, n, cfg.samples), 0.0) / cfg.trials)
        out.append({"w": float(w), "n": n, "measured": float(np.mean(trial_vars)), "predicted": pred,
                    "sigma": sigma, "trial_variances": trial_vars, "statistic": VARIANCE_STATISTIC})
    return out


def brickwork_layer(n: int, layer: int, xi: float, g) -> list[tuple[int, int]]:
    """CX (control, target) pairs of one brickwork layer, each kept with probability ``xi``."""
    pairs = []
    for a in range(layer % 2, n - 1, 2):
        if g.random() < xi:
            pairs.append((a, a + 1) if g.random() < 0.5 else (a + 1, a))
    return pairs


def _cx_permutation(n: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(2**n)
    return np.where((idx >> control) & 1, idx ^ (1 << target), idx)


def _product_batch(values: np.ndarray) -> np.ndarray:
    """Real amplitudes (S, 2^n) of Ry-encoded product states with ``<Z_q> = values[:, q]``."""
    s, n = values.shape
    amps = np.ones((s, 1))
    for q in range(n):
        ket = np.array([encode_ket(float(v)) for v in values[:, q]]).real
        amps = np.einsum("sb,sa->sba", ket, amps).reshape(s, -1)
    return amps


def run_depth_decay(cfg: CorrelationExperimentConfig | None = None, rng=None) -> dict:
    """Input/observable correlation behind a random brickwork of CX layers.

    Entanglement strength ``xi`` is the probability that each brick of a
    layer is present.  For every trial one circuit is drawn per ``xi``;
    ``samples`` input vectors ``x ~ U(0, 1)^n`` are Ry-encoded and the exact
    ``<Z_q>`` after ``d`` layers is correlated with ``x_q`` over all
    samples and qubits.
    """
    cfg = cfg or CorrelationExperimentConfig()
    rng = as_rng(rng)
    n = cfg.n_qubits
    dmax = max(cfg.depths)
    z_sign = 1.0 - 2.0 * basis_bits(n).astype(float)
    rows, fits = [], []
    for xi_i, xi in enumerate(cfg.xis):
        per_trial = np.zeros((cfg.trials, len(cfg.depths)))
        for t in range(cfg.trials):
            g = rng.child(xi_i, t).generator
            layers = [brickwork_layer(n, d, xi, g) for d in range(dmax)]
            x = g.uniform(0.0, 1.0, size=(cfg.samples, n))
            amps = _product_batch(x)
            for d in range(dmax + 1):
                if d in cfg.depths:
                    z = (amps**2) @ z_sign
                    if np.std(z) < 1e-14:
                        raise NumericalError(f"degenerate observables at depth {d}, xi={xi}")
                    r = float(np.corrcoef(x.ravel(), z.ravel())[0, 1])
                    for k, dd in enumerate(cfg.depths):
                        if dd == d:
                            per_trial[t, k] = r
                if d < dmax:
                    for c, tq in layers[d]:
                        amps = amps[:, _cx_permutation(n, c, tq)]
        mean = per_trial.mean(axis=0)
        std = per_trial.std(axis=0, ddof=1) if cfg.trials > 1 else np.zeros_like(mean)
        for k, d in enumerate(cfg.depths):
            rows.append({"xi": float(xi), "depth": int(d), "mean": float(mean[k]), "std": float(std[k]),
                         "trials": [float(v) for v in per_trial[:, k]]})
        fits.append({"xi": float(xi), **fit_decay_rate(cfg.depths, mean)})
    return {"rows": rows, "fits": fits}


def fit_decay_rate(depths, correlations, level: float = 0.95) -> dict:
    """Least-squares rate ``k`` of ``r(d) ~ r0 exp(-k d)`` with a t-interval."""
    d = np.asarray(depths, dtype=float)
    r = np.asarray(correlations, dtype=float)
    keep = r > 0
    if keep.sum() < 3 or np.ptp(d[keep]) == 0:
        return {"rate": float("nan"), "ci_low": float("nan"), "ci_high": float("nan")}
    fit = stats.linregress(d[keep], np.log(r[keep]))
    half = stats.t.ppf(0.5 + level / 2, keep.sum() - 2) * fit.stderr
    return {"rate": float(-fit.slope), "ci_low": float(-fit.slope - half), "ci_high": float(-fit.slope + half)}


# --- benchmark -------------------------------------------------------------


@dataclass
class BenchmarkConfig:
    sizes: list[int] = field(default_factory=lambda: [4, 5, 6, 7, 8])
    p: int = 3
    seeds: int = 20
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    training: TrainingConfig = field(default_factory=lambda: TrainingConfig(coin_f="constant"))
    coin_theta: float = math.pi / 2
    lam: float = 0.5
    days: int = 252
    workers: int = 1

    def __post_init__(self):
        if not self.sizes:
            raise InputError("sizes must be nonempty")
        if any(n < 1 for n in self.sizes):
            raise InputError("sizes must be positive")
        if max(self.sizes) > 20:
            raise InputError(f"benchmark sizes are limited to n <= 20 (got {max(self.sizes)})")
        if self.p < 1 or self.seeds < 1:
            raise InputError("p and seeds must be positive")


def normalized_ising(spec) -> tuple[IsingModel, np.ndarray]:
    """Ising model of the portfolio QUBO scaled to ``max |Q| = 1``, with its spectrum."""
    q = build_portfolio_qubo(spec).q
    scale = float(np.max(np.abs(q)))
    ising = qubo_to_ising(QuboProblem(q / scale if scale > 0 else q))
    return ising, ising.basis_energies()


def benchmark_instance(n: int, seed_index: int, cfg: BenchmarkConfig, rng) -> dict:
    """QAOA, QAWA and uniform-guess ratios on one synthetic instance."""
    if n > MAX_BRUTE_FORCE:
        raise InputError(f"instance with n={n} is too large to enumerate")
    spec = synthetic_portfolio(n, rng.child(0), days=cfg.days, lam=cfg.lam)
    ising, e = normalized_ising(spec)
    lo, hi = float(e.min()), float(e.max())
    q = optimize_qaoa(ising, cfg.p, cfg.optimizer, rng.child(1))
    oracle = QawaOracle(ising, q.params, coin_theta=cfg.coin_theta, coin_f=cfg.training.coin_f)
    oracle, trace = train(oracle, TargetSpec(0.0, "brute-force-alignment"), cfg.training, rng.child(2))
    e_qawa = qawa_energy(oracle)
    return {
        "n": n,
        "seed": seed_index,
        "qaoa_energy": q.energy,
        "qawa_energy": e_qawa,
        "optimum": lo,
        "worst": hi,
        "qaoa": approximation_ratio(q.energy, lo, hi),
        "qawa": approximation_ratio(e_qawa, lo, hi),
        "random": approximation_ratio(float(e.mean()), lo, hi),
        "optimum_ratio": 1.0,
        "training_loss": float(trace.losses[-1]),
    }


def run_benchmark(sizes=None, p: int | None = None, cfg: BenchmarkConfig | None = None, rng=None) -> dict:
    """Approximation ratios per size over ``cfg.seeds`` instances.

    Instance ``(n, s)`` uses ``rng.child(n, s)``; rows are aggregated in
    ``(size, seed)`` order whatever the worker count.  The exact optimum
    (ratio 1) stands in for a classical solver column.
    """
    cfg = cfg or BenchmarkConfig()
    if sizes is not None or p is not None:
        cfg = BenchmarkConfig(**{**_shallow(cfg), **({"sizes": list(sizes)} if sizes is not None else {}),
                                 **({"p": p} if p is not None else {})})
    rng = as_rng(rng)
    args = [(n, s, cfg, rng.child(n, s)) for n in cfg.sizes for s in range(cfg.seeds)]
    results = _map(benchmark_instance, args, cfg.workers)
    summary = []
    for n in cfg.sizes:
        rs = [r for r in results if r["n"] == n]
        entry = {"n": n, "seeds": len(rs)}
        for key in ("qaoa", "qawa", "random"):
            v = np.array([r[key] for r in rs])
            entry[key] = {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if v.size > 1 else 0.0}
        entry["dominance"] = float(np.mean([r["qawa"] >= r["qaoa"] - 1e-12 for r in rs]))
        summary.append(entry)
    return {"instances": results, "summary": summary}


def _shallow(cfg) -> dict:
    return {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}


BENCHMARK_HEADER = ["n", "method", "mean", "std", "seeds"]


def benchmark_rows(result: dict):
    for e in result["summary"]:
        for method, key in (("QAOA", "qaoa"), ("QAWA", "qawa")):
            yield [e["n"], method, e[key]["mean"], e[key]["std"], e["seeds"]]


# --- validation ------------------------------------------------------------

# target weight vector of the reconstruction check
RECONSTRUCTION_TARGET = (0.31547798, 0.01962489, 0.20088612, 0.46401101)


@dataclass
class ValidationConfig:
    n_assets: int = 8
    p: int = 3
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    training: TrainingConfig = field(default_factory=lambda: TrainingConfig(coin_f="constant"))
    posterior_coin_theta: float = math.pi / 8
    posterior_shots: int = 4096
    target_weights: list[float] = field(default_factory=lambda: list(RECONSTRUCTION_TARGET))
    reconstruction_eta: float = 0.5
    reconstruction_iterations: int = 500
    copula: CopulaExperimentConfig = field(default_factory=CopulaExperimentConfig)

    def __post_init__(self):
        if self.n_assets < 2:
            raise InputError("need at least two assets")
        if not self.target_weights:
            raise InputError("target weights must be nonempty")


def replay_batch(n: int) -> Batch:
    """Every ``+-1`` input vector once, equally weighted."""
    return Batch(1.0 - 2.0 * basis_bits(n).astype(float))


def reconstruct_weights(target, eta: float = 0.5, iterations: int = 500, enc=None):
    """Recover ``target`` from noiseless replay of its activated outputs.

    Returns ``(recovered, trace)``; training starts from uniform weights.
    """
    t = np.asarray(target, dtype=float)
    if np.any(t < 0) or t.sum() > 1 + 1e-12:
        raise InputError("target weights must be nonnegative with sum <= 1")
    enc = enc or default_encoder()
    batch = replay_batch(t.size)
    y = TargetSpec(enc.activate(batch.x @ t), "user-supplied")
    cfg = TrainingConfig(eta=eta, iterations=iterations, tolerance=1e-24)
    return train_weights(np.full(t.size, 1.0 / t.size), batch, y, cfg, enc)


def run_validation(cfg: ValidationConfig | None = None, rng=None) -> tuple[ValidationReport, dict]:
    """Bayesian update, weight reconstruction, copula invariance and convergence."""
    cfg = cfg or ValidationConfig()
    rng = as_rng(rng)
    spec = synthetic_portfolio(cfg.n_assets, rng.child(0))
    ising, e = normalized_ising(spec)
    lo, hi = float(e.min()), float(e.max())
    q = optimize_qaoa(ising, cfg.p, cfg.optimizer, rng.child(1))
    oracle = QawaOracle(ising, q.params, coin_theta=math.pi / 2, coin_f=cfg.training.coin_f)
    oracle, _ = train(oracle, TargetSpec(0.0, "brute-force-alignment"), cfg.training, rng.child(2))
    mixed = QawaOracle(ising, q.params, weights=oracle.weights, coin_theta=cfg.posterior_coin_theta,
                       sign_mask=oracle.sign_mask, coin_f="constant")
    post, prior = posterior_summary(mixed, cfg.posterior_shots, rng.child(3))
    recovered, rec_trace = reconstruct_weights(cfg.target_weights, cfg.reconstruction_eta,
                                               cfg.reconstruction_iterations)
    cop = run_copula_experiment(cfg.copula, rng.child(4))
    report = build_validation_report({
        "mean_posterior": post,
        "prior_expectation": prior,
        "recovered_weights": recovered,
        "target_weights": cfg.target_weights,
        "copula_distance": cop["final_distance"],
        "final_qawa": approximation_ratio(qawa_energy(oracle), lo, hi),
        "final_qaoa": approximation_ratio(q.energy, lo, hi),
    })
    extras = {
        "qaoa_energy": q.energy,
        "qawa_energy": qawa_energy(oracle),
        "optimum": lo,
        "worst": hi,
        "reconstruction_iterations": len(rec_trace.losses) - 1,
        "copula_final_kl": cop["final_kl"],
    }
    return report, extras
