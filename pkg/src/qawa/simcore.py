"""Dense statevector simulator.

Conventions used everywhere in the package:

* Qubit ``q`` is bit ``q`` of the basis index (little-endian), so basis
  index ``j`` has qubit 0 in its least significant bit.
* Bitstrings are written qubit-0 first: ``"10"`` means qubit 0 is ``|1>``
  and qubit 1 is ``|0>`` (basis index 1).
* Explicit multi-qubit matrices act on ``targets`` listed low bit first:
  for a 4x4 matrix on ``(q_low, q_high)`` the row/column index is
  ``2 * bit(q_high) + bit(q_low)``.  In textbook tensor notation
  ``A (x) B`` the left factor ``A`` therefore lives on ``q_high``.

Randomness comes from :class:`RngStream`, a thin wrapper around numpy's
counter-based Philox-4x64-10 bit generator keyed by a :class:`numpy.random.SeedSequence`.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError, NumericalError

NORM_TOL = 1e-10
UNITARY_TOL = 1e-10

RNG_ALGORITHM = "numpy.random.Philox (4x64, 10 rounds) seeded via SeedSequence(seed, spawn_key)"


class RngStream:
    """Seeded random stream with deterministic child derivation.

    ``RngStream(seed).child(k)`` yields an independent stream keyed by
    ``(seed, k)``; children of children extend the key path.  Identical
    seeds and key paths give identical sequences on every platform.
    """

    algorithm = RNG_ALGORITHM

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise InputError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.path = tuple(int(p) for p in path)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self.generator = np.random.Generator(np.random.Philox(seq))

    def child(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(keys))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, path={self.path})"


def as_rng(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream(42)
    return RngStream(int(rng))


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.n_qubits < 1:
            raise InputError("a state needs at least one qubit")
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (2**self.n_qubits,):
            raise InputError(
                f"expected {2**self.n_qubits} amplitudes, got shape {self.amplitudes.shape}"
            )

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        amps = np.zeros(2**n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def from_bitstring(cls, bits: str) -> "StateVector":
        n = len(bits)
        amps = np.zeros(2**n, dtype=np.complex128)
        amps[bitstring_to_index(bits)] = 1.0
        return cls(n, amps)

    @classmethod
    def from_amplitudes(cls, amplitudes, normalize: bool = False) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=np.complex128)
        n = int(round(np.log2(amps.size)))
        if 2**n != amps.size:
            raise InputError("amplitude count must be a power of two")
        if normalize:
            amps = amps / np.linalg.norm(amps)
        return cls(n, amps)

    @classmethod
    def product(cls, single_qubit_states: Sequence[Sequence[complex]]) -> "StateVector":
        """Tensor product of one-qubit kets, listed qubit 0 first."""
        amps = np.array([1.0 + 0j])
        for ket in single_qubit_states:
            amps = np.kron(np.asarray(ket, dtype=np.complex128), amps)
        return cls.from_amplitudes(amps)

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class MeasurementRecord:
    qubit: int
    outcome: int
    probability: float


@dataclass
class SampleSet:
    """Multiset of measured bitstrings (qubit-0-first strings)."""

    n_bits: int
    counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for bits, c in self.counts.items():
            if len(bits) != self.n_bits or set(bits) - {"0", "1"}:
                raise InputError(f"bad bitstring {bits!r} for {self.n_bits} bits")
            if c < 0:
                raise InputError("counts must be nonnegative")

    @property
    def shots(self) -> int:
        return int(sum(self.counts.values()))

    @classmethod
    def from_indices(cls, indices: Iterable[int], n_bits: int) -> "SampleSet":
        tally = Counter(int(i) for i in indices)
        counts = {index_to_bitstring(i, n_bits): c for i, c in sorted(tally.items())}
        return cls(n_bits, counts)

    @classmethod
    def from_bit_array(cls, bits: np.ndarray) -> "SampleSet":
        bits = np.asarray(bits, dtype=np.int64)
        weights = 1 << np.arange(bits.shape[1])
        return cls.from_indices(bits @ weights, bits.shape[1])

    def bit_array(self) -> np.ndarray:
        """Expand to a ``(shots, n_bits)`` 0/1 array, sorted by basis index."""
        rows = []
        for bits in sorted(self.counts, key=bitstring_to_index):
            row = [int(b) for b in bits]
            rows.extend([row] * self.counts[bits])
        return np.array(rows, dtype=np.int64).reshape(-1, self.n_bits)

    def frequencies(self) -> dict[str, float]:
        total = self.shots
        return {b: c / total for b, c in self.counts.items()}

    def merge(self, other: "SampleSet") -> "SampleSet":
        if other.n_bits != self.n_bits:
            raise InputError("cannot merge sample sets of different width")
        merged = Counter(self.counts)
        merged.update(other.counts)
        return SampleSet(self.n_bits, dict(merged))


def bitstring_to_index(bits: str) -> int:
    return sum(1 << q for q, b in enumerate(bits) if b == "1")


def index_to_bitstring(index: int, n_bits: int) -> str:
    return "".join("1" if (index >> q) & 1 else "0" for q in range(n_bits))


def basis_bits(n_qubits: int) -> np.ndarray:
    """``(2**n, n)`` table with entry ``[j, q]`` equal to bit ``q`` of ``j``."""
    idx = np.arange(2**n_qubits)
    return ((idx[:, None] >> np.arange(n_qubits)[None, :]) & 1).astype(np.int8)


# --- gate matrices ---------------------------------------------------------

I2 = np.eye(2, dtype=np.complex128)
X_MAT = np.array([[0, 1], [1, 0]], dtype=np.complex128)
Y_MAT = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
Z_MAT = np.array([[1, 0], [0, -1]], dtype=np.complex128)
H_MAT = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)


def rx_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)


def ry_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def rz_matrix(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)]).astype(np.complex128)


def cx_matrix() -> np.ndarray:
    """CX on ``(q_low, q_high)`` with the control on ``q_high``."""
    m = np.eye(4, dtype=np.complex128)
    m[[2, 3]] = m[[3, 2]]
    return m


def swap_matrix() -> np.ndarray:
    m = np.eye(4, dtype=np.complex128)
    m[[1, 2]] = m[[2, 1]]
    return m


def is_unitary(m: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    m = np.asarray(m)
    return bool(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))) < tol)


_SINGLE = {"X", "Y", "Z", "H", "RX", "RY", "RZ"}
_KINDS = _SINGLE | {"CX", "SWAP", "U1", "U2", "CU2"}


@dataclass(frozen=True, eq=False)
class GateOp:
    """One circuit instruction.

    ``kind`` is one of X, Y, Z, H, RX, RY, RZ (one target), CX (targets =
    (control, target) as a convenience, or controls + one target), SWAP, U1
    (explicit 2x2), U2 (explicit 4x4 on (q_low, q_high)) or CU2 (controlled
    explicit 4x4).  Any kind accepts extra ``controls``.
    """

    kind: str
    targets: tuple[int, ...]
    controls: tuple[int, ...] = ()
    angle: float | None = None
    matrix: np.ndarray | None = None

    def base_matrix(self) -> np.ndarray:
        k = self.kind
        if k in ("RX", "RY", "RZ"):
            if self.angle is None or not np.isfinite(self.angle):
                raise InputError(f"{k} needs a finite angle")
            return {"RX": rx_matrix, "RY": ry_matrix, "RZ": rz_matrix}[k](self.angle)
        if k == "X" or k == "CX":
            return X_MAT
        if k == "Y":
            return Y_MAT
        if k == "Z":
            return Z_MAT
        if k == "H":
            return H_MAT
        if k == "SWAP":
            return swap_matrix()
        if self.matrix is None:
            raise InputError(f"{k} requires an explicit matrix")
        return np.asarray(self.matrix, dtype=np.complex128)

    def resolved(self) -> tuple[np.ndarray, tuple[int, ...], tuple[int, ...]]:
        """Return ``(matrix, targets, controls)`` with CX shorthand expanded."""
        if self.kind not in _KINDS:
            raise InputError(f"unknown gate kind {self.kind!r}")
        targets, controls = tuple(self.targets), tuple(self.controls)
        if self.kind == "CX" and len(targets) == 2:
            controls = controls + (targets[0],)
            targets = (targets[1],)
        return self.base_matrix(), targets, controls


# convenience constructors
def x(q):
    return GateOp("X", (q,))


def h(q):
    return GateOp("H", (q,))


def ry(q, theta):
    return GateOp("RY", (q,), angle=float(theta))


def rz(q, theta):
    return GateOp("RZ", (q,), angle=float(theta))


def rx(q, theta):
    return GateOp("RX", (q,), angle=float(theta))


def cx(control, target):
    return GateOp("CX", (target,), controls=(control,))


def two_qubit(m, q_low, q_high, controls=()):
    kind = "CU2" if controls else "U2"
    return GateOp(kind, (q_low, q_high), controls=tuple(controls), matrix=np.asarray(m))


# --- application -----------------------------------------------------------


def _check_indices(n, targets, controls):
    allq = list(targets) + list(controls)
    if any(not 0 <= q < n for q in allq):
        raise InputError(f"qubit index out of range for {n} qubits: {allq}")
    if len(set(allq)) != len(allq):
        raise InputError(f"targets and controls must be distinct: {allq}")


def apply_matrix_inplace(amps: np.ndarray, n: int, m: np.ndarray, targets, controls=()) -> None:
    """Apply ``m`` (``2^k x 2^k``, targets low bit first) to a raw amplitude array."""
    k, c = len(targets), len(controls)
    # axis of qubit q in the C-ordered (2,)*n tensor is n-1-q
    ctrl_axes = [n - 1 - q for q in controls]
    tgt_axes = [n - 1 - q for q in reversed(targets)]
    t = amps.reshape((2,) * n)
    moved = np.moveaxis(t, ctrl_axes + tgt_axes, list(range(c + k)))
    block = moved.reshape(2**c, 2**k, -1)
    block[-1] = m @ block[-1]
    t_new = np.moveaxis(block.reshape(moved.shape), list(range(c + k)), ctrl_axes + tgt_axes)
    amps[:] = t_new.reshape(-1)


def apply_gate(state: StateVector, gate: GateOp) -> StateVector:
    m, targets, controls = gate.resolved()
    _check_indices(state.n_qubits, targets, controls)
    if m.shape != (2 ** len(targets),) * 2:
        raise InputError(f"{gate.kind}: matrix shape {m.shape} does not fit {len(targets)} targets")
    if gate.kind in ("U1", "U2", "CU2") and not is_unitary(m):
        raise InputError(f"{gate.kind}: matrix is not unitary")
    out = state.copy()
    apply_matrix_inplace(out.amplitudes, out.n_qubits, m, targets, controls)
    return out


def apply_circuit(state: StateVector, gates: Iterable[GateOp]) -> StateVector:
    for g in gates:
        state = apply_gate(state, g)
    return state


def apply_two_qubit_unitary(state: StateVector, m, q_low: int, q_high: int, controls=()) -> StateVector:
    if q_low == q_high:
        raise InputError("two-qubit unitary needs distinct qubits")
    m = np.asarray(m, dtype=np.complex128)
    if m.shape != (4, 4):
        raise InputError("two-qubit unitary must be 4x4")
    return apply_gate(state, two_qubit(m, q_low, q_high, controls))


def inverse(gate: GateOp) -> GateOp:
    if gate.kind in ("RX", "RY", "RZ"):
        return GateOp(gate.kind, gate.targets, gate.controls, angle=-gate.angle)
    if gate.kind in ("U1", "U2", "CU2"):
        return GateOp(gate.kind, gate.targets, gate.controls, matrix=np.asarray(gate.matrix).conj().T)
    return gate  # X, Y, Z, H, CX, SWAP are self-inverse


# --- measurement -----------------------------------------------------------


def outcome_probability(state: StateVector, q: int, outcome: int) -> float:
    _check_indices(state.n_qubits, (q,), ())
    idx = np.arange(2**state.n_qubits)
    mask = ((idx >> q) & 1) == outcome
    return float(np.sum(state.probabilities()[mask]))


def project(state: StateVector, q: int, outcome: int) -> tuple[float, StateVector | None]:
    """Apply the projector for ``outcome`` on qubit ``q``.

    Returns ``(P(outcome), renormalized post-measurement state)``; the state
    is ``None`` when the branch has zero probability.
    """
    _check_indices(state.n_qubits, (q,), ())
    idx = np.arange(2**state.n_qubits)
    keep = ((idx >> q) & 1) == outcome
    amps = np.where(keep, state.amplitudes, 0.0)
    p = float(np.vdot(amps, amps).real)
    if p <= 0.0:
        return 0.0, None
    return p, StateVector(state.n_qubits, amps / np.sqrt(p))


def measure_qubit(state: StateVector, q: int, rng) -> tuple[MeasurementRecord, StateVector]:
    rng = as_rng(rng)
    p1 = outcome_probability(state, q, 1)
    p1 = min(max(p1, 0.0), 1.0)
    outcome = int(rng.generator.random() < p1)
    p, post = project(state, q, outcome)
    if post is None or p < 1e-300:
        raise NumericalError(f"drew outcome {outcome} on qubit {q} with zero probability")
    return MeasurementRecord(q, outcome, p), post


def reset_qubit(state: StateVector, q: int, rng) -> StateVector:
    record, post = measure_qubit(state, q, rng)
    if record.outcome == 1:
        post = apply_gate(post, x(q))
    return post


def dephase(state: StateVector, q: int) -> list[tuple[float, StateVector]]:
    """Unrecorded Z measurement of ``q`` as an explicit two-branch mixture."""
    branches = []
    for outcome in (0, 1):
        p, post = project(state, q, outcome)
        if post is not None:
            branches.append((p, post))
    return branches


def z_signs(n_qubits: int, q: int) -> np.ndarray:
    idx = np.arange(2**n_qubits)
    return 1.0 - 2.0 * ((idx >> q) & 1)


def expectation_z(state: StateVector, q: int) -> float:
    _check_indices(state.n_qubits, (q,), ())
    return float(np.dot(state.probabilities(), z_signs(state.n_qubits, q)))


def expectation_zz(state: StateVector, q1: int, q2: int) -> float:
    return float(np.dot(state.probabilities(), z_signs(state.n_qubits, q1) * z_signs(state.n_qubits, q2)))


def sample_indices(state: StateVector, shots: int, rng) -> np.ndarray:
    """Draw ``shots`` basis indices i.i.d. from the Born distribution, in shot order."""
    if shots < 1:
        raise InputError("shots must be >= 1")
    rng = as_rng(rng)
    p = state.probabilities()
    p = p / p.sum()
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    u = rng.generator.random(shots)
    return np.searchsorted(cdf, u, side="right").clip(max=p.size - 1)


def sample_bitstrings(state: StateVector, shots: int, rng) -> SampleSet:
    return SampleSet.from_indices(sample_indices(state, shots, rng), state.n_qubits)
