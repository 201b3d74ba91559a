"""Two-qubit arithmetic blocks, SELU activation encoding and cascade algebra.

A block acts on ``(q_low, q_high)``; the accumulating operand lives on
``q_high``.  With inputs encoded as ``Ry(arccos x)|0>`` the weighted-sum
block leaves ``<Z_high> = w x_high + (1 - w) x_low`` and the product block
leaves ``<Z_low> = x_high x_low``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .simcore import (
    I2,
    GateOp,
    SampleSet,
    StateVector,
    apply_circuit,
    apply_two_qubit_unitary,
    as_rng,
    cx,
    cx_matrix,
    expectation_z,
    ry,
    ry_matrix,
    rz,
    rz_matrix,
    sample_indices,
    x as x_gate,
)

SELU_LAMBDA = 1.0507
SELU_ALPHA = 1.6733


# --- block matrices --------------------------------------------------------


def weight_to_angle(w: float) -> float:
    if not 0.0 <= w <= 1.0:
        raise InputError(f"weight {w} outside [0, 1]")
    return float(np.arccos(np.clip(1.0 - 2.0 * w, -1.0, 1.0)))


def weight_recovery(alpha: float) -> float:
    """Inverse of :func:`weight_to_angle`: ``(1 - cos alpha) / 2``."""
    return float(0.5 * (1.0 - np.cos(alpha)))


@dataclass(frozen=True)
class WeightedSumGate:
    w: float

    def __post_init__(self):
        if not 0.0 <= self.w <= 1.0:
            raise InputError(f"weight {self.w} outside [0, 1]")

    @property
    def alpha(self) -> float:
        return weight_to_angle(self.w)

    def matrix(self) -> np.ndarray:
        return u_sum_matrix(self.w)


def u_prod_matrix() -> np.ndarray:
    ph = np.exp(-1j * np.pi / 4)
    return ph * np.array(
        [[1, 0, 0, 0], [0, 1j, 0, 0], [0, 0, 0, 1j], [0, 0, 1, 0]], dtype=np.complex128
    )


def u_sum_matrix(w: float) -> np.ndarray:
    if not 0.0 <= w <= 1.0:
        raise InputError(f"weight {w} outside [0, 1]")
    s, c = math.sqrt(w), math.sqrt(1.0 - w)
    ph = np.exp(-1j * np.pi / 4)
    return ph * np.array(
        [[1, 0, 0, 0], [0, 1j * s, c, 0], [0, 0, 0, 1j], [0, 1j * c, -s, 0]], dtype=np.complex128
    )


def cx_low_to_high() -> np.ndarray:
    """CX on ``(q_low, q_high)`` with the control on ``q_low``."""
    m = np.eye(4, dtype=np.complex128)
    m[[1, 3]] = m[[3, 1]]
    return m


def u_prod_composition() -> np.ndarray:
    return cx_matrix() @ np.kron(I2, rz_matrix(np.pi / 2))


def u_sum_composition(w: float) -> np.ndarray:
    """``[Ry(-a/2) (x) I] CX [Ry(a/2) (x) I] U_prod`` from primitive matrices."""
    a = weight_to_angle(w)
    return (
        np.kron(ry_matrix(-a / 2), I2)
        @ cx_low_to_high()
        @ np.kron(ry_matrix(a / 2), I2)
        @ u_prod_composition()
    )


def u_prod_gates(q_low: int, q_high: int) -> list[GateOp]:
    return [rz(q_low, np.pi / 2), cx(q_high, q_low)]


def u_sum_gates(w: float, q_low: int, q_high: int) -> list[GateOp]:
    a = weight_to_angle(w)
    return u_prod_gates(q_low, q_high) + [ry(q_high, a / 2), cx(q_low, q_high), ry(q_high, -a / 2)]


# --- value encoding --------------------------------------------------------


def encode_ket(x: float) -> np.ndarray:
    """``Ry(arccos x)|0>``, whose Z expectation is ``x``."""
    if not -1.0 - 1e-12 <= x <= 1.0 + 1e-12:
        raise InputError(f"value {x} outside [-1, 1]")
    x = min(max(x, -1.0), 1.0)
    return np.array([math.sqrt((1 + x) / 2), math.sqrt((1 - x) / 2)], dtype=np.complex128)


def _diag_ket_pair(x: float):
    """Basis-state decomposition of the dephased encoding of ``x``."""
    p0 = (1.0 + x) / 2.0
    return [(p0, np.array([1, 0], dtype=np.complex128)), (1.0 - p0, np.array([0, 1], dtype=np.complex128))]


def single_block_expectation(
    x1: float,
    x2: float,
    w: float,
    mode: str = "pure",
    shots: int | None = None,
    rng=None,
) -> float:
    """Z expectation of the accumulator after one weighted-sum block.

    ``x1`` is fed to qubit 0 (``q_high``) and ``x2`` to qubit 1.
    ``mode="pure"`` uses the product of Ry encodings; ``mode="diagonal"``
    prepares the dephased inputs as a probability-weighted average of
    basis-state runs.  With ``shots`` the value is estimated from samples of
    the ``pure`` state.
    """
    u = u_sum_matrix(w)
    if mode == "pure":
        branches = [(1.0, encode_ket(x1), encode_ket(x2))]
    elif mode == "diagonal":
        branches = [
            (p1 * p2, k1, k2) for p1, k1 in _diag_ket_pair(x1) for p2, k2 in _diag_ket_pair(x2) if p1 * p2 > 0
        ]
    else:
        raise InputError(f"unknown mode {mode!r}")
    if shots is not None and mode != "pure":
        raise InputError("sampling is only available in pure mode")
    total = 0.0
    for p, k1, k2 in branches:
        psi = StateVector.product([k1, k2])
        psi = apply_two_qubit_unitary(psi, u, q_low=1, q_high=0)
        if shots is not None:
            idx = sample_indices(psi, shots, as_rng(rng))
            return float(np.mean(1 - 2 * (idx & 1)))
        total += p * expectation_z(psi, 0)
    return float(total)


def sampled_sigma(expectation: float, shots: int) -> float:
    """Standard error of a ``shots``-sample Z estimate."""
    return math.sqrt(max(1.0 - expectation**2, 0.0) / shots)


# --- cascade algebra -------------------------------------------------------


@dataclass
class CascadeCoefficients:
    weights: np.ndarray
    effective: np.ndarray


def _check_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float).reshape(-1)
    if np.any(w < 0) or np.any(w > 1) or np.any(~np.isfinite(w)):
        raise InputError("cascade weights must lie in [0, 1]")
    return w


def cascade_effective(weights) -> CascadeCoefficients:
    """Simplex coefficients of ``s = x_0; s <- w_k s + (1 - w_k) x_{k+1}``.

    ``effective[k] = (1 - w_{k-1}) * prod_{j >= k} w_j`` with ``w_{-1} = 0``.
    """
    w = _check_weights(weights)
    m = w.size + 1
    eff = np.empty(m)
    tail = 1.0
    for k in range(m - 1, 0, -1):
        eff[k] = (1.0 - w[k - 1]) * tail
        tail *= w[k - 1]
    eff[0] = tail
    return CascadeCoefficients(w, eff)


def invert_cascade(effective) -> np.ndarray:
    """Weights whose cascade reproduces a simplex point.

    Partial sums of the coefficients are the surviving masses
    ``prod_{j >= k} w_j``, so each weight is a ratio of consecutive partial
    sums.  Where the upper partial sum vanishes the weight is free; 1 is used.
    """
    e = np.asarray(effective, dtype=float).reshape(-1)
    if np.any(e < -1e-12) or abs(e.sum() - 1.0) > 1e-9:
        raise InputError("target is not on the simplex")
    e = np.clip(e, 0.0, None)
    cum = np.cumsum(e)
    cum[-1] = 1.0
    w = np.ones(e.size - 1)
    for k in range(e.size - 1):
        if cum[k + 1] > 0:
            w[k] = min(cum[k] / cum[k + 1], 1.0)
    return w


def cascade_gates(weights, acc: int = 0, inputs=None) -> list[GateOp]:
    """Weighted-sum cascade accumulating on ``acc``; block k uses ``weights[k]``."""
    w = _check_weights(weights)
    inputs = list(inputs) if inputs is not None else [q for q in range(w.size + 1) if q != acc][: w.size]
    gates: list[GateOp] = []
    for wk, q in zip(w, inputs):
        gates += u_sum_gates(float(wk), q_low=q, q_high=acc)
    return gates


def cnot_census(gates) -> int:
    return sum(1 for g in gates if g.kind == "CX")


def circuit_depth(gates, n_qubits: int) -> int:
    """ASAP layer count; a gate occupies all of its targets and controls."""
    level = [0] * n_qubits
    for g in gates:
        _, t, c = g.resolved()
        qs = list(t) + list(c)
        d = max(level[q] for q in qs) + 1
        for q in qs:
            level[q] = d
    return max(level, default=0)


def cascade_expectation(xs, weights, mode: str = "dephased") -> float:
    """Accumulator Z expectation after the full cascade.

    ``"dephased"`` measures the accumulator between blocks (exact recursion
    for any inputs).  ``"coherent"`` runs the whole register without
    intermediate measurement, which coincides with the recursion only for
    basis-state (+-1) inputs.
    """
    xs = np.asarray(xs, dtype=float)
    w = _check_weights(weights)
    if xs.size != w.size + 1:
        raise InputError(f"{xs.size} inputs need {xs.size - 1} weights, got {w.size}")
    if mode == "dephased":
        s = float(xs[0])
        for wk, xk in zip(w, xs[1:]):
            s = single_block_expectation(s, float(xk), float(wk), mode="diagonal")
        return s
    if mode == "coherent":
        psi = StateVector.product([encode_ket(float(v)) for v in xs])
        for k, wk in enumerate(w, start=1):
            psi = apply_two_qubit_unitary(psi, u_sum_matrix(float(wk)), q_low=k, q_high=0)
        return expectation_z(psi, 0)
    raise InputError(f"unknown mode {mode!r}")


# --- SELU activation -------------------------------------------------------


def selu(x, lam: float = SELU_LAMBDA, alpha: float = SELU_ALPHA):
    x = np.asarray(x, dtype=float)
    out = np.where(x > 0, lam * x, lam * alpha * np.expm1(np.minimum(x, 0.0)))
    return float(out) if out.ndim == 0 else out


def selu_derivative(x, lam: float = SELU_LAMBDA, alpha: float = SELU_ALPHA):
    """Derivative of :func:`selu`; at 0 the right derivative ``lam`` is used."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 0, lam, lam * alpha * np.exp(np.minimum(x, 0.0)))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ActivationEncoder:
    """``a(x) = clip(selu(x / scale_a), -1, 1)`` encoded as an Ry angle."""

    lambda_selu: float = SELU_LAMBDA
    alpha_selu: float = SELU_ALPHA
    scale_a: float = 1.0
    clamp: bool = True

    def __post_init__(self):
        if not self.scale_a > 0:
            raise InputError("scale_a must be positive")

    def raw(self, x):
        return selu(np.asarray(x, dtype=float) / self.scale_a, self.lambda_selu, self.alpha_selu)

    def activate(self, x):
        return np.clip(self.raw(x), -1.0, 1.0)

    def derivative(self, x):
        """``a'(x)``; zero where the clamp is active."""
        x = np.asarray(x, dtype=float)
        r = self.raw(x)
        d = selu_derivative(x / self.scale_a, self.lambda_selu, self.alpha_selu) / self.scale_a
        return np.where(np.abs(r) > 1.0, 0.0, d)

    def admissible_domain(self) -> tuple[float, float]:
        """Interval of ``x`` on which no clamping occurs."""
        lo = math.log(1.0 - 1.0 / (self.lambda_selu * self.alpha_selu))
        return lo * self.scale_a, self.scale_a / self.lambda_selu

    def encode(self, x: float) -> tuple[float, bool]:
        """Return ``(theta, clamped)`` with ``cos(theta) = a(x)``."""
        v = float(self.raw(x))
        clamped = abs(v) > 1.0
        if clamped and not self.clamp:
            raise InputError(f"selu({x}/{self.scale_a}) = {v} is outside [-1, 1]")
        return float(np.arccos(np.clip(v, -1.0, 1.0))), clamped


def encode_activation(x: float, enc: ActivationEncoder | None = None) -> float:
    return (enc or ActivationEncoder()).encode(x)[0]


def decode_expectation(state: StateVector, q: int) -> float:
    return expectation_z(state, q)


def activation_product_expectation(xs, enc: ActivationEncoder | None = None) -> float:
    """``a(prod_k x_k)`` evaluated through a product chain plus an activation qubit.

    Qubits ``0..n-1`` hold ``Ry(arccos x_k)|0>``; product blocks on
    ``(k+1, k)`` leave the product on qubit ``n-1``.  Its expectation is
    re-encoded with the activation on qubit ``n`` and read out in Z.
    """
    enc = enc or ActivationEncoder()
    xs = np.asarray(xs, dtype=float).reshape(-1)
    if xs.size == 0 or np.any(np.abs(xs) > 1.0):
        raise InputError("product inputs must lie in [-1, 1]")
    n = xs.size
    psi = StateVector.product([encode_ket(float(v)) for v in xs] + [np.array([1, 0], dtype=np.complex128)])
    up = u_prod_matrix()
    for k in range(n - 1):
        psi = apply_two_qubit_unitary(psi, up, q_low=k + 1, q_high=k)
    prod = expectation_z(psi, n - 1)
    theta, _ = enc.encode(prod)
    psi = apply_circuit(psi, [ry(n, theta)])
    return decode_expectation(psi, n)


# --- angle recovery --------------------------------------------------------


def frqi_gates(alphas) -> tuple[int, list[GateOp]]:
    """Encoder register: position qubits ``1..`` in superposition, value qubit 0.

    Position ``k`` rotates qubit 0 by ``Ry(alpha_k)``, so basis indices
    ``2k`` / ``2k+1`` carry ``cos^2`` / ``sin^2`` of ``alpha_k / 2``.
    """
    a = np.asarray(alphas, dtype=float).reshape(-1)
    npos = max(1, math.ceil(math.log2(a.size))) if a.size > 1 else 0
    if a.size != 2**npos:
        raise InputError("number of angles must be a power of two")
    n = npos + 1
    gates: list[GateOp] = [GateOp("H", (q,)) for q in range(1, n)]
    for k, ak in enumerate(a):
        zeros = [q for q in range(1, n) if not (k >> (q - 1)) & 1]
        gates += [x_gate(q) for q in zeros]
        gates.append(GateOp("RY", (0,), controls=tuple(range(1, n)), angle=float(ak)))
        gates += [x_gate(q) for q in zeros]
    return n, gates


def frqi_state(alphas) -> StateVector:
    n, gates = frqi_gates(alphas)
    return apply_circuit(StateVector.zero(n), gates)


def recover_angles(counts: SampleSet, return_flags: bool = False):
    """Estimate each encoded angle from the odd/even count ratio.

    A pair with no even counts but some odd counts maps to the limit ``pi``
    and is flagged.
    """
    n_angles = 2 ** (counts.n_bits - 1)
    tally = np.zeros(2**counts.n_bits)
    for bits, c in counts.counts.items():
        tally[sum(int(b) << i for i, b in enumerate(bits))] += c
    even, odd = tally[0::2][:n_angles], tally[1::2][:n_angles]
    flags = (even == 0) & (odd > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(even > 0, odd / np.where(even > 0, even, 1), 0.0)
    angles = np.where(flags, np.pi, 2.0 * np.arctan(np.sqrt(ratio)))
    return (angles, flags) if return_flags else angles


def angle_sigma(shots: int, n_angles: int) -> float:
    """Delta-method standard error of a recovered angle.

    A pair receives about ``shots / n_angles`` hits and the estimator equals
    ``2 arcsin sqrt(p_hat)``, whose variance is ``1 / hits``.
    """
    return math.sqrt(n_angles / shots)
