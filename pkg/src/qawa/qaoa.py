"""p-layer QAOA over an Ising model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .optim import OptimizerConfig, minimize_fd
from .problem import IsingModel
from .simcore import StateVector, apply_gate, as_rng, rx


@dataclass
class QaoaParams:
    gammas: np.ndarray = field(default_factory=lambda: np.zeros(0))
    betas: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.gammas = np.asarray(self.gammas, dtype=float).reshape(-1)
        self.betas = np.asarray(self.betas, dtype=float).reshape(-1)
        if self.gammas.size != self.betas.size:
            raise InputError(f"{self.gammas.size} gammas but {self.betas.size} betas")

    @property
    def p(self) -> int:
        return self.gammas.size

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.gammas, self.betas])

    @classmethod
    def from_vector(cls, v) -> "QaoaParams":
        v = np.asarray(v, dtype=float)
        p = v.size // 2
        return cls(v[:p], v[p:])

    def to_dict(self) -> dict:
        return {"gammas": self.gammas.tolist(), "betas": self.betas.tolist()}


def _check_dims(state: StateVector, ising: IsingModel):
    if state.n_qubits != ising.n:
        raise InputError(f"state has {state.n_qubits} qubits, Ising model has {ising.n} spins")


def cost_unitary(state: StateVector, gamma: float, ising: IsingModel, energies=None) -> StateVector:
    """Multiply each amplitude by ``exp(-i gamma E(z))``."""
    _check_dims(state, ising)
    e = ising.basis_energies() if energies is None else energies
    return StateVector(state.n_qubits, state.amplitudes * np.exp(-1j * gamma * e))


def mixer_unitary(state: StateVector, beta: float) -> StateVector:
    """``exp(-i beta sum_q X_q)``, i.e. ``Rx(2 beta)`` on every qubit."""
    out = state
    for q in range(state.n_qubits):
        out = apply_gate(out, rx(q, 2.0 * beta))
    return out


def plus_state(n: int) -> StateVector:
    return StateVector(n, np.full(2**n, 2 ** (-n / 2), dtype=np.complex128))


def prepare_qaoa_state(ising: IsingModel, params: QaoaParams, energies=None) -> StateVector:
    e = ising.basis_energies() if energies is None else energies
    psi = plus_state(ising.n)
    for g, b in zip(params.gammas, params.betas):
        psi = cost_unitary(psi, g, ising, e)
        psi = mixer_unitary(psi, b)
    return psi


def energy_expectation(state: StateVector, ising: IsingModel, energies=None) -> float:
    _check_dims(state, ising)
    e = ising.basis_energies() if energies is None else energies
    return float(state.probabilities() @ e)


@dataclass
class QaoaResult:
    params: QaoaParams
    energy: float
    trace: list[float]
    evaluations: int


def optimize_params(ising: IsingModel, p: int, cfg: OptimizerConfig | None = None, rng=None) -> tuple[QaoaParams, list[float]]:
    """Minimize the statevector energy over ``(gammas, betas)``.

    Returns the best parameters and the best-so-far energy trace.
    """
    res = optimize_qaoa(ising, p, cfg, rng)
    return res.params, res.trace


def optimize_qaoa(ising: IsingModel, p: int, cfg: OptimizerConfig | None = None, rng=None) -> QaoaResult:
    if p < 1:
        raise InputError("QAOA depth p must be >= 1")
    cfg = cfg or OptimizerConfig()
    e = ising.basis_energies()

    def f(v):
        return energy_expectation(prepare_qaoa_state(ising, QaoaParams.from_vector(v), e), ising, e)

    res = minimize_fd(f, 2 * p, cfg, as_rng(rng))
    return QaoaResult(QaoaParams.from_vector(res.x), res.value, res.trace, res.evaluations)
