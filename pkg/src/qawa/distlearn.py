"""Distributed correlation learning simulated in-process.

Local inversions learn a single-qubit ``V`` that undoes a circuit's action
on one site's Pauli algebra; sewing applies the learned ``V`` after the
circuit and swaps the data register onto an ancilla register.  Partitioned
learning trains one oracle per qubit subset and sums the zero-padded
correlation blocks.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .optim import OptimizerConfig, minimize_fd
from .oracle import QawaOracle, TargetSpec, TrainingConfig, postselected_distribution, train
from .problem import IsingModel
from .qaoa import optimize_qaoa
from .simcore import (
    I2,
    X_MAT,
    Y_MAT,
    Z_MAT,
    GateOp,
    StateVector,
    apply_circuit,
    apply_gate,
    as_rng,
    basis_bits,
    expectation_z,
    is_unitary,
    ry_matrix,
    rz_matrix,
)

PAULIS = (X_MAT, Y_MAT, Z_MAT)


def embed(op: np.ndarray, site: int, n: int) -> np.ndarray:
    """``op`` on qubit ``site`` of an ``n``-qubit register (little-endian)."""
    out = np.array([[1.0 + 0j]])
    for q in range(n - 1, -1, -1):
        out = np.kron(out, op if q == site else I2)
    return out


def circuit_unitary(gates, n: int) -> np.ndarray:
    cols = []
    for k in range(2**n):
        amps = np.zeros(2**n, dtype=np.complex128)
        amps[k] = 1.0
        cols.append(apply_circuit(StateVector(n, amps), gates).amplitudes)
    return np.array(cols).T


def _as_unitary(u, n: int | None = None) -> np.ndarray:
    if isinstance(u, (list, tuple)):
        if n is None:
            n = 1 + max(max(tuple(g.targets) + tuple(g.controls)) for g in u) if u else 1
        return circuit_unitary(u, n)
    return np.asarray(u, dtype=np.complex128)


def local_inversion_loss(v, u, site: int = 0) -> float:
    """``sum_P ||V^dag U^dag P U V - P||_2`` over the Paulis of ``site``.

    ``v`` is a 2x2 unitary acting on ``site``; ``u`` is a dense unitary
    on the whole register.
    """
    u = np.asarray(u, dtype=np.complex128)
    v = np.asarray(v, dtype=np.complex128)
    if v.shape != (2, 2):
        raise InputError("V must be a single-qubit unitary")
    if not is_unitary(u, 1e-9) or not is_unitary(v, 1e-9):
        raise InputError("inputs must be unitary")
    n = int(round(np.log2(u.shape[0])))
    if 2**n != u.shape[0] or not 0 <= site < n:
        raise InputError(f"site {site} invalid for a {u.shape[0]}-dimensional unitary")
    vf = embed(v, site, n)
    uv = u @ vf
    total = 0.0
    for p in PAULIS:
        pf = embed(p, site, n)
        total += np.linalg.norm(uv.conj().T @ pf @ uv - pf, ord=2)
    return float(total)


def zyz(params) -> np.ndarray:
    a, b, c = params
    return rz_matrix(a) @ ry_matrix(b) @ rz_matrix(c)


@dataclass
class LocalInversion:
    site: int
    v: np.ndarray
    loss: float
    trace: list[float] = field(default_factory=list)


def learn_local_inversion(u, site: int = 0, cfg: OptimizerConfig | None = None, rng=None, n_qubits: int | None = None) -> LocalInversion:
    """Fit ``V = Rz Ry Rz`` minimizing :func:`local_inversion_loss`.

    The first start is the identity, so an already-inverted site converges
    immediately.
    """
    cfg = cfg or OptimizerConfig(iterations=300, learning_rate=0.1, restarts=3)
    um = _as_unitary(u, n_qubits)
    f = lambda p: local_inversion_loss(zyz(p), um, site)  # noqa: E731
    res = minimize_fd(f, 3, cfg, as_rng(rng), init=lambda g: g.uniform(-np.pi, np.pi, 3), x0=np.zeros(3))
    return LocalInversion(site, zyz(res.x), res.value, res.trace)


def sew_and_extract(input_state: StateVector, u_gates, inversions: list[LocalInversion]) -> np.ndarray:
    """Ancilla ``<Z>`` after ``U``, the learned ``V`` per site and a register swap.

    Data occupies qubits ``0..n-1`` and the ancilla register ``n..2n-1``.
    """
    n = input_state.n_qubits
    sites = [inv.site for inv in inversions]
    if len(set(sites)) != len(sites) or any(not 0 <= s < n for s in sites):
        raise InputError("one inversion per distinct data site is required")
    anc = np.zeros(2**n, dtype=np.complex128)
    anc[0] = 1.0
    psi = StateVector(2 * n, np.kron(anc, input_state.amplitudes))
    psi = apply_circuit(psi, u_gates)
    for inv in inversions:
        psi = apply_gate(psi, GateOp("U1", (inv.site,), matrix=inv.v))
    for q in range(n):
        psi = apply_gate(psi, GateOp("SWAP", (q, n + q)))
    return np.array([expectation_z(psi, n + q) for q in range(n)])


# --- partitioned learning --------------------------------------------------


@dataclass
class DistributedConfig:
    qaoa_p: int = 2
    optimizer: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(iterations=60, restarts=2))
    training: TrainingConfig = field(default_factory=lambda: TrainingConfig(iterations=200, shots=1024))
    epsilon: float = 0.1
    max_workers: int | None = None


@dataclass
class WorkerReport:
    worker_id: int
    subset: list[int]
    loss: float
    c_local: np.ndarray  # |S| x |S|
    trace: list[float]

    def padded(self, n: int) -> np.ndarray:
        c = np.zeros((n, n))
        c[np.ix_(self.subset, self.subset)] = self.c_local
        return c

    def to_json(self, n: int) -> dict:
        return {
            "id": self.worker_id,
            "subset": list(self.subset),
            "loss": self.loss,
            "c_m": self.padded(n).reshape(-1).tolist(),
        }


@dataclass
class PartitionResult:
    c: np.ndarray
    reports: list[WorkerReport]
    total_loss: float
    converged: bool

    def to_json(self) -> str:
        n = self.c.shape[0]
        return json.dumps(
            {
                "converged": self.converged,
                "total_loss": self.total_loss,
                "c": self.c.tolist(),
                "workers": [r.to_json(n) for r in self.reports],
            },
            sort_keys=True,
            indent=2,
        )


def default_subsets(n: int, m: int) -> list[list[int]]:
    if not 1 <= m <= n:
        raise InputError(f"need 1 <= M <= n, got M={m}, n={n}")
    return [part.tolist() for part in np.array_split(np.arange(n), m)]


def train_worker(ising: IsingModel, subset, cfg: DistributedConfig, rng, worker_id: int = 0) -> WorkerReport:
    """Train QAOA and the walk oracle on the sub-problem of ``subset``.

    ``C_m`` is the second-moment matrix ``E[x_i x_j]`` of the encoded values
    under the learned post-selected distribution.
    """
    subset = list(subset)
    if not subset:
        raise InputError("empty subset")
    sub = ising.restrict(subset)
    rng = as_rng(rng)
    q = optimize_qaoa(sub, cfg.qaoa_p, cfg.optimizer, rng.child(0))
    oracle = QawaOracle(sub, q.params, coin_theta=np.pi / 2, coin_f="constant")
    tcfg = TrainingConfig(**{**cfg.training.to_dict(), "coin_f": "constant", "seed": None})
    oracle, trace = train(oracle, TargetSpec(0.0, "brute-force-alignment"), tcfg, rng.child(1))
    p = postselected_distribution(oracle)
    x = oracle.encode_bits(basis_bits(sub.n))
    c_local = (x * p[:, None]).T @ x
    return WorkerReport(worker_id, subset, float(trace.losses[-1]), c_local, trace.losses)


def learn_correlations(ising: IsingModel, cfg: DistributedConfig | None = None, rng=None) -> WorkerReport:
    """Non-distributed run: one worker on every qubit, using worker 0's stream."""
    cfg = cfg or DistributedConfig()
    return train_worker(ising, range(ising.n), cfg, as_rng(rng).child(0), 0)


def partition_learn(ising: IsingModel, m: int, cfg: DistributedConfig | None = None, rng=None, subsets=None) -> PartitionResult:
    """Train ``m`` workers concurrently and merge ``C = sum_m C_m``.

    Overlapping subsets add their entries.  Worker ``k`` draws from
    ``rng.child(k)``; the merge runs in worker order.
    """
    cfg = cfg or DistributedConfig()
    n = ising.n
    subsets = default_subsets(n, m) if subsets is None else [list(s) for s in subsets]
    if len(subsets) != m:
        raise InputError(f"{m} workers but {len(subsets)} subsets")
    if any(len(s) == 0 for s in subsets):
        raise InputError("empty subset")
    if set().union(*map(set, subsets)) != set(range(n)):
        raise InputError("subsets must cover every qubit")
    rng = as_rng(rng)
    with ThreadPoolExecutor(max_workers=cfg.max_workers or m) as pool:
        futures = [pool.submit(train_worker, ising, s, cfg, rng.child(k), k) for k, s in enumerate(subsets)]
        reports = [f.result() for f in futures]
    c = np.zeros((n, n))
    for r in reports:
        c += r.padded(n)
    total = float(sum(r.loss for r in reports))
    return PartitionResult(c, reports, total, converged(total, cfg.epsilon))


def converged(total_loss: float, epsilon: float) -> bool:
    return bool(total_loss < epsilon)
