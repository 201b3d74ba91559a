"""The walk oracle: QAOA sampling, sign-flipped re-encoding, coin-controlled
weighted-sum cascades and the activation readout.

Per shot ``j`` the data register is measured to bits ``b``; qubit ``i``
contributes the encoded value ``x_i = sigma_i z_i`` with ``z_i = 1 - 2 b_i``
and ``sigma_i = -1`` where ``sign_mask[i]`` is set.  Two linear coefficient
vectors act on ``x``: ``alt_weights`` on the coin-``|0>`` branch and
``weights`` on the coin-``|1>`` branch.  Each vector has entries in
``[0, 1]`` with sum at most 1; the missing mass is routed to a null input
(a maximally mixed encoder qubit) so that the cascade stays convex.

The coin is ``cos(theta)|0> + sin(theta)|1>`` with ``theta = coin_theta *
f(x)``.  The accumulator then reads ``cos^2 s_alt + sin^2 s_learned`` and the
shot output is ``Y = a(that)`` for the activation ``a``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .arith import (
    ActivationEncoder,
    cascade_effective,
    cascade_gates,
    invert_cascade,
)
from .errors import InputError, NumericalError
from .problem import IsingModel, approximation_ratio
from .qaoa import QaoaParams, prepare_qaoa_state
from .simcore import (
    GateOp,
    SampleSet,
    StateVector,
    apply_circuit,
    as_rng,
    basis_bits,
    expectation_z,
    measure_qubit,
    project,
    ry,
    sample_indices,
    x as x_gate,
)

ORACLE_SCALE_A = 1.2  # keeps a(s) unclamped for every |s| <= 1


def default_encoder() -> ActivationEncoder:
    return ActivationEncoder(scale_a=ORACLE_SCALE_A)


@dataclass
class QawaOracle:
    ising: IsingModel
    qaoa_params: QaoaParams
    encoder: ActivationEncoder = field(default_factory=default_encoder)
    weights: np.ndarray | None = None
    alt_weights: np.ndarray | None = None
    coin_theta: float = math.pi / 2
    sign_mask: np.ndarray | None = None
    coin_f: str = "mean"

    def __post_init__(self):
        n = self.ising.n
        self.weights = _linear(self.weights, n, np.full(n, 1.0 / n), "weights")
        self.alt_weights = _linear(self.alt_weights, n, np.eye(n)[0], "alt_weights")
        self.sign_mask = (
            np.zeros(n, dtype=bool) if self.sign_mask is None else np.asarray(self.sign_mask, dtype=bool).reshape(-1)
        )
        if self.sign_mask.size != n:
            raise InputError(f"sign_mask needs {n} entries")
        if not 0.0 <= self.coin_theta <= math.pi / 2 + 1e-12:
            raise InputError("coin_theta must lie in [0, pi/2]")
        if self.coin_f not in COIN_F:
            raise InputError(f"unknown coin selector {self.coin_f!r}; choose from {sorted(COIN_F)}")

    @property
    def n(self) -> int:
        return self.ising.n

    @property
    def signs(self) -> np.ndarray:
        return np.where(self.sign_mask, -1.0, 1.0)

    def encode_bits(self, bits: np.ndarray) -> np.ndarray:
        """Measured bits (shots, n) -> encoded values ``sigma * (1 - 2 b)``."""
        return self.signs * (1.0 - 2.0 * np.asarray(bits, dtype=float))

    def coin_angles(self, x: np.ndarray) -> np.ndarray:
        return self.coin_theta * COIN_F[self.coin_f](np.atleast_2d(x))

    def qaoa_state(self) -> StateVector:
        return prepare_qaoa_state(self.ising, self.qaoa_params)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "alt_weights": self.alt_weights.tolist(),
            "coin_theta": self.coin_theta,
            "coin_f": self.coin_f,
            "sign_mask": self.sign_mask.astype(int).tolist(),
            "scale_a": self.encoder.scale_a,
            "qaoa": self.qaoa_params.to_dict(),
        }


def _linear(v, n, default, name) -> np.ndarray:
    v = default.copy() if v is None else np.asarray(v, dtype=float).reshape(-1)
    if v.size != n:
        raise InputError(f"{name} needs {n} entries, got {v.size}")
    if np.any(v < -1e-12) or np.any(v > 1 + 1e-12):
        raise InputError(f"{name} entries must lie in [0, 1]")
    return np.clip(v, 0.0, 1.0)


COIN_F = {
    "mean": lambda x: np.mean(x, axis=1),
    "constant": lambda x: np.ones(x.shape[0]),
}


# --- classical algebra -----------------------------------------------------


def recursive_weighted_sum(x, w) -> float:
    """``s = x_0``, then ``s <- w_k s + (1 - w_k) x_{k+1}``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    if x.size != w.size + 1:
        raise InputError(f"{x.size} values need {x.size - 1} weights, got {w.size}")
    if np.any(w < 0) or np.any(w > 1):
        raise InputError("weights must lie in [0, 1]")
    s = x[0]
    for wk, xk in zip(w, x[1:]):
        s = wk * s + (1.0 - wk) * xk
    return float(s)


def coin_mixture_expectation(theta: float, a_val: float, b_val: float) -> float:
    return float(math.cos(theta) ** 2 * a_val + math.sin(theta) ** 2 * b_val)


def effective_weights(theta: float, w0, w1) -> np.ndarray:
    """``cos^2(theta/2) w0 + sin^2(theta/2) w1`` (``theta`` is an Ry angle)."""
    w0, w1 = np.asarray(w0, dtype=float), np.asarray(w1, dtype=float)
    if w0.shape != w1.shape:
        raise InputError("weight vectors differ in length")
    c = math.cos(theta / 2) ** 2
    return c * w0 + (1.0 - c) * w1


def cascade_for_linear(v) -> np.ndarray:
    """Cascade weights over ``[x_0, ..., x_{n-1}, null]`` realizing ``v . x``."""
    v = np.asarray(v, dtype=float)
    rest = 1.0 - v.sum()
    if rest < -1e-9:
        raise InputError(f"coefficients sum to {v.sum():.6g} > 1; not realizable by a convex cascade")
    return invert_cascade(np.append(v, max(rest, 0.0)))


def linear_from_cascade(w) -> np.ndarray:
    return cascade_effective(w).effective[:-1]


# --- circuit path ----------------------------------------------------------


def _controlled(gates, ctrl: int):
    return [GateOp(g.kind, g.targets, tuple(g.controls) + (ctrl,), g.angle, g.matrix) for g in gates]


def shot_circuit(oracle: QawaOracle, bits, theta: float, null_bit: int) -> tuple[int, list[GateOp]]:
    """Gate list for one shot.

    Qubits: ``0..n-1`` encoder (accumulator on 0), ``n`` null input,
    ``n+1`` coin.  Returns ``(n_qubits, gates)``.
    """
    n = oracle.n
    coin = n + 1
    gates: list[GateOp] = []
    for i, b in enumerate(bits):
        # Ry(arccos z) on |0> is the basis state |b>; the sign flip is an X
        if int(b) ^ int(oracle.sign_mask[i]):
            gates.append(x_gate(i))
    if null_bit:
        gates.append(x_gate(n))
    gates.append(ry(coin, 2.0 * theta))
    inputs = list(range(1, n + 1))
    learned = cascade_gates(cascade_for_linear(oracle.weights), acc=0, inputs=inputs)
    base = cascade_gates(cascade_for_linear(oracle.alt_weights), acc=0, inputs=inputs)
    gates += _controlled(learned, coin)
    gates += [x_gate(coin)] + _controlled(base, coin) + [x_gate(coin)]
    return n + 2, gates


def shot_branch_values(oracle: QawaOracle, bits, theta: float) -> tuple[float, float, float]:
    """Statevector replay of one shot: ``(s_alt, s_learned, <Z_0>)``.

    The null input is maximally mixed, handled as the average of its two
    basis-state runs.
    """
    s_alt = s_learned = z0 = 0.0
    for null_bit in (0, 1):
        nq, gates = shot_circuit(oracle, bits, theta, null_bit)
        psi = apply_circuit(StateVector.zero(nq), gates)
        z0 += 0.5 * expectation_z(psi, 0)
        coin = nq - 1
        for c in (0, 1):
            p, post = project(psi, coin, c)
            if post is None:
                # coin branch absent at this theta; evaluate it directly
                alt_theta = 0.0 if c == 0 else math.pi / 2
                _, g2 = shot_circuit(oracle, bits, alt_theta, null_bit)
                post = apply_circuit(StateVector.zero(nq), g2)
            val = 0.5 * expectation_z(post, 0)
            if c == 0:
                s_alt += val
            else:
                s_learned += val
    return s_alt, s_learned, z0


def activation_readout(value: float, enc: ActivationEncoder) -> float:
    """Re-encode ``value`` with the activation on a fresh qubit and decode."""
    theta, _ = enc.encode(value)
    return expectation_z(apply_circuit(StateVector.zero(1), [ry(0, theta)]), 0)


@dataclass
class ForwardResult:
    samples: SampleSet
    bits: np.ndarray  # (shots, n) in shot order
    x: np.ndarray  # encoded values per shot
    theta: np.ndarray  # coin angle per shot
    s_alt: np.ndarray
    s_learned: np.ndarray
    z0: np.ndarray
    y: np.ndarray
    coin: np.ndarray  # measured coin bit per shot
    readout: np.ndarray  # measured accumulator sign per shot (+1 / -1)


def measure_register(state: StateVector, rng) -> int:
    """Measure every qubit in turn, collapsing after each; returns the basis index."""
    idx = 0
    for q in range(state.n_qubits):
        rec, state = measure_qubit(state, q, rng)
        idx |= rec.outcome << q
    return idx


def run_forward(oracle: QawaOracle, shots: int, rng=None, method: str = "circuit", sequential: bool = False) -> ForwardResult:
    """Sample ``shots`` passes of the oracle.

    ``method="circuit"`` replays each distinct bitstring through the gate
    model; ``"classical"`` uses the closed-form linear algebra.  With
    ``sequential`` the data register is measured qubit by qubit through
    :func:`measure_qubit` instead of joint Born sampling.
    """
    if shots < 1:
        raise InputError("shots must be >= 1")
    rng = as_rng(rng)
    psi = oracle.qaoa_state()
    if sequential:
        idx = np.array([measure_register(psi, rng.child(0, j)) for j in range(shots)])
    else:
        idx = sample_indices(psi, shots, rng.child(0))
    bits = ((idx[:, None] >> np.arange(oracle.n)) & 1).astype(np.int8)
    x = oracle.encode_bits(bits)
    theta = oracle.coin_angles(x)

    if method == "classical":
        s_alt, s_learned = x @ oracle.alt_weights, x @ oracle.weights
        c2 = np.cos(theta) ** 2
        z0 = c2 * s_alt + (1 - c2) * s_learned
        y = oracle.encoder.activate(z0)
    elif method == "circuit":
        cache: dict[tuple, tuple] = {}
        rows = []
        for j in range(shots):
            key = (int(idx[j]), float(theta[j]))
            if key not in cache:
                sa, sl, z = shot_branch_values(oracle, bits[j], theta[j])
                cache[key] = (sa, sl, z, activation_readout(z, oracle.encoder))
            rows.append(cache[key])
        s_alt, s_learned, z0, y = (np.array(c) for c in zip(*rows))
    else:
        raise InputError(f"unknown method {method!r}")

    g = rng.child(1).generator
    coin = (g.random(shots) < np.sin(theta) ** 2).astype(np.int8)
    s_c = np.where(coin == 1, s_learned, s_alt)
    readout = np.where(g.random(shots) < (1 + s_c) / 2, 1, -1).astype(np.int8)
    return ForwardResult(
        SampleSet.from_indices(idx, oracle.n), bits, x, theta, s_alt, s_learned, z0, np.asarray(y), coin, readout
    )


def mixture_circuit_expectation(oracle: QawaOracle, theta: float, probs=None) -> float:
    """Accumulator ``<Z_0>`` with a fixed coin angle and the data register
    dephased by mid-circuit measurement (basis states weighted by ``probs``)."""
    probs = oracle.qaoa_state().probabilities() if probs is None else np.asarray(probs)
    table = basis_bits(oracle.n)
    total = 0.0
    for k in np.flatnonzero(probs > 0):
        total += probs[k] * shot_branch_values(oracle, table[k], theta)[2]
    return float(total)


# --- estimator, loss, gradient ---------------------------------------------


def estimate_expectation(samples) -> tuple[float, float]:
    """Mean and standard error (sample std / sqrt N) of per-shot values."""
    y = np.asarray(samples, dtype=float).reshape(-1)
    if y.size == 0:
        raise InputError("no samples")
    se = float(y.std(ddof=1) / math.sqrt(y.size)) if y.size > 1 else 0.0
    return float(y.mean()), se


@dataclass
class Batch:
    """Encoded values ``x`` (N, n); optional per-sample weights sum to 1."""

    x: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        if self.x.shape[0] == 0:
            raise InputError("empty batch")
        if self.weights is None:
            self.weights = np.full(self.x.shape[0], 1.0 / self.x.shape[0])
        else:
            self.weights = np.asarray(self.weights, dtype=float)
            self.weights = self.weights / self.weights.sum()

    @property
    def n(self) -> int:
        return self.x.shape[1]


@dataclass
class TargetSpec:
    """``y_target`` is a scalar (matched by the batch mean) or one value per sample."""

    y_target: float | np.ndarray = 0.0
    source: str = "user-supplied"

    def __post_init__(self):
        if self.source not in TARGET_SOURCES:
            raise InputError(f"unknown target source {self.source!r}")
        y = np.asarray(self.y_target, dtype=float)
        if not np.all(np.isfinite(y)):
            raise InputError("target must be finite")
        self.y_target = float(y) if y.ndim == 0 else y

    @property
    def vector(self) -> bool:
        return np.ndim(self.y_target) > 0


TARGET_SOURCES = ("brute-force-alignment", "classical-copula-correlation", "user-supplied")


def _forward(weights, batch: Batch, enc: ActivationEncoder):
    u = batch.x @ np.asarray(weights, dtype=float)
    return u, enc.activate(u)


def loss(weights, batch: Batch, target: TargetSpec, enc: ActivationEncoder | None = None) -> float:
    """Squared error of the activated weighted sum.

    Scalar target: ``(mean_j Y_j - y)^2``.  Vector target: ``mean_j (Y_j - y_j)^2``.
    """
    enc = enc or default_encoder()
    _, y = _forward(weights, batch, enc)
    if target.vector:
        return float(batch.weights @ (y - target.y_target) ** 2)
    return float((batch.weights @ y - target.y_target) ** 2)


def gradient(weights, batch: Batch, target: TargetSpec, enc: ActivationEncoder | None = None) -> np.ndarray:
    enc = enc or default_encoder()
    u, y = _forward(weights, batch, enc)
    da = enc.derivative(u)
    if target.vector:
        return 2.0 * ((batch.weights * (y - target.y_target) * da) @ batch.x)
    return 2.0 * (batch.weights @ y - target.y_target) * ((batch.weights * da) @ batch.x)


# --- training --------------------------------------------------------------


def project_box(v):
    return np.clip(v, 0.0, 1.0)


def project_simplex(v):
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1.0), 0.0)


def project_capped(v):
    """Projection onto ``{0 <= v <= 1, sum(v) <= 1}``."""
    b = project_box(v)
    return b if b.sum() <= 1.0 else project_simplex(v)


PROJECTIONS = {"clip": project_box, "capped": project_capped, "simplex": project_simplex}


@dataclass
class TrainingConfig:
    eta: float = 0.5
    iterations: int = 500
    shots: int = 2048
    seed: int | None = None
    target_source: str = "user-supplied"
    coin_f: str = "mean"
    tolerance: float = 1e-16
    projection: str = "capped"
    divergence_factor: float = 1e3

    def __post_init__(self):
        if not self.eta > 0:
            raise InputError("learning rate must be positive")
        if self.projection not in PROJECTIONS:
            raise InputError(f"unknown projection {self.projection!r}")

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainingTrace:
    losses: list[float]  # loss at the start of each iteration, then the final loss
    best_losses: list[float]
    weight_history: np.ndarray
    converged_at: int | None


def train_weights(w0, batch: Batch, target: TargetSpec, cfg: TrainingConfig, enc: ActivationEncoder | None = None):
    """Projected gradient descent on the linear coefficients."""
    enc = enc or default_encoder()
    proj = PROJECTIONS[cfg.projection]
    w = proj(np.asarray(w0, dtype=float))
    l0 = loss(w, batch, target, enc)
    losses, best, hist = [l0], [l0], [w.copy()]
    best_w, best_l = w.copy(), l0
    converged = 0 if l0 <= cfg.tolerance else None
    for t in range(cfg.iterations):
        if converged is not None:
            break
        w = proj(w - cfg.eta * gradient(w, batch, target, enc))
        lt = loss(w, batch, target, enc)
        if not np.isfinite(lt) or lt > cfg.divergence_factor * max(l0, 1e-300):
            raise NumericalError(f"training diverged at iteration {t + 1}: loss {lt:.3g} (initial {l0:.3g})", losses)
        losses.append(lt)
        hist.append(w.copy())
        if lt < best_l:
            best_w, best_l = w.copy(), lt
        best.append(best_l)
        if lt <= cfg.tolerance:
            converged = t + 1
    return best_w, TrainingTrace(losses, best, np.array(hist), converged)


def brute_force_targets(ising: IsingModel, bits: np.ndarray) -> np.ndarray:
    """Per-sample target ``2 r(b) - 1`` from the min-max approximation ratio."""
    e = ising.basis_energies()
    lo, hi = float(e.min()), float(e.max())
    idx = (np.asarray(bits, dtype=np.int64) << np.arange(bits.shape[1])).sum(axis=1)
    return np.array([2.0 * approximation_ratio(e[k], lo, hi) - 1.0 for k in idx])


def alignment_sign_mask(x_unsigned: np.ndarray, t: np.ndarray, weights=None) -> np.ndarray:
    """Flip qubits whose ``z_i`` anti-correlates with the target over the batch."""
    w = np.full(len(t), 1.0 / len(t)) if weights is None else np.asarray(weights)
    zc = x_unsigned - w @ x_unsigned
    cov = (w * (t - w @ t)) @ zc
    return cov < 0


def train(oracle: QawaOracle, target: TargetSpec, cfg: TrainingConfig, rng=None) -> tuple[QawaOracle, TrainingTrace]:
    """Fit the learned-branch coefficients on a sampled batch.

    For ``brute-force-alignment`` the per-sample targets are built from the
    exact spectrum and the sign mask is refitted to the batch; the scalar
    ``y_target`` of ``target`` is ignored in that case.
    """
    rng = as_rng(rng if cfg.seed is None else cfg.seed)
    idx = sample_indices(oracle.qaoa_state(), cfg.shots, rng.child(0))
    bits = ((idx[:, None] >> np.arange(oracle.n)) & 1).astype(np.int8)
    oracle = replace(oracle, coin_f=cfg.coin_f)
    if target.source == "brute-force-alignment":
        t = brute_force_targets(oracle.ising, bits)
        oracle = replace(oracle, sign_mask=alignment_sign_mask(1.0 - 2.0 * bits, t))
        target = TargetSpec(t, target.source)
    elif target.vector and np.size(target.y_target) != cfg.shots:
        raise InputError("per-sample target length must equal the number of shots")
    batch = Batch(oracle.encode_bits(bits))
    w, trace = train_weights(oracle.weights, batch, target, cfg, oracle.encoder)
    return replace(oracle, weights=w), trace


def fit_contraction(losses, skip: int = 0, floor: float = 1e-28) -> float:
    """Fitted ``mu / L`` from the log-linear decay ``L(t) ~ exp(-2 (mu/L) t)``."""
    l = np.asarray(losses, dtype=float)[skip:]
    keep = l > floor
    t = np.arange(l.size)[keep]
    if t.size < 2:
        return float("inf")
    slope = np.polyfit(t, np.log(l[keep]), 1)[0]
    return float(-slope / 2.0)


# --- posterior -------------------------------------------------------------


def bayesian_posterior(x, likelihood0: float, likelihood1: float, prior1: float) -> float:
    """``P(c=1 | x)`` from the two branch likelihoods of observation ``x``."""
    if likelihood0 < 0 or likelihood1 < 0:
        raise InputError("likelihoods must be nonnegative")
    if not 0.0 <= prior1 <= 1.0:
        raise InputError("prior must lie in [0, 1]")
    num = prior1 * likelihood1
    den = num + (1.0 - prior1) * likelihood0
    if den <= 0:
        if likelihood0 == 0 and likelihood1 == 0:
            raise InputError("both likelihoods are zero")
        return float(prior1)
    return float(num / den)


def posterior_summary(oracle: "QawaOracle", shots: int, rng=None) -> tuple[float, float]:
    """(mean posterior ``P(c=1 | x)``, mean prior ``sin^2 theta``).

    ``P(x | c=0)`` is the raw QAOA distribution and ``P(x | c=1)`` the
    learned (post-selected) one; ``x`` is drawn from the learned branch.
    """
    p0 = oracle.qaoa_state().probabilities()
    p1 = postselected_distribution(oracle)
    x = oracle.encode_bits(basis_bits(oracle.n))
    prior = np.sin(oracle.coin_angles(x)) ** 2
    post = np.array([bayesian_posterior(None, a, b, c) for a, b, c in zip(p0, p1, prior)])
    cdf = np.cumsum(p1)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, as_rng(rng).generator.random(shots), side="right").clip(max=p1.size - 1)
    return float(post[idx].mean()), float(prior[idx].mean())


# --- energies --------------------------------------------------------------


def postselected_distribution(oracle: QawaOracle) -> np.ndarray:
    """Data-register distribution conditioned on the activation qubit reading ``+1``."""
    p = oracle.qaoa_state().probabilities()
    x = oracle.encode_bits(basis_bits(oracle.n))
    theta = oracle.coin_angles(x)
    c2 = np.cos(theta) ** 2
    y = oracle.encoder.activate(c2 * (x @ oracle.alt_weights) + (1 - c2) * (x @ oracle.weights))
    q = p * (1 + y) / 2
    s = q.sum()
    if s <= 0:
        raise NumericalError("post-selection probability is zero")
    return q / s


def qawa_energy(oracle: QawaOracle) -> float:
    return float(postselected_distribution(oracle) @ oracle.ising.basis_energies())
