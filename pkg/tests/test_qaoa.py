import math

import numpy as np
import pytest
from scipy.linalg import expm

from qawa.errors import InputError
from qawa.optim import OptimizerConfig, fd_gradient, minimize_fd
from qawa.problem import IsingModel, QuboProblem, qubo_to_ising
from qawa.qaoa import (
    QaoaParams,
    cost_unitary,
    energy_expectation,
    mixer_unitary,
    optimize_params,
    optimize_qaoa,
    plus_state,
    prepare_qaoa_state,
)
from qawa.simcore import X_MAT, RngStream, StateVector, expectation_z


def field_model(h):
    n = len(h)
    return IsingModel(np.zeros((n, n)), np.asarray(h, dtype=float), 0.0)


def dense_x_sum(n):
    total = np.zeros((2**n, 2**n), dtype=complex)
    for q in range(n):
        op = np.array([[1.0 + 0j]])
        for k in reversed(range(n)):
            op = np.kron(op, X_MAT if k == q else np.eye(2))
        total += op
    return total


def random_state(n, seed):
    g = np.random.default_rng(seed)
    return StateVector.from_amplitudes(g.normal(size=2**n) + 1j * g.normal(size=2**n), normalize=True)


class TestCost:
    def test_zero_gamma(self):
        psi = random_state(2, 0)
        out = cost_unitary(psi, 0.0, field_model([0.3, -0.2]))
        assert np.allclose(out.amplitudes, psi.amplitudes)

    def test_single_field(self):
        gamma = 0.37
        out = cost_unitary(plus_state(1), gamma, field_model([1.0]))
        expected = np.array([np.exp(-1j * gamma), np.exp(1j * gamma)]) / math.sqrt(2)
        overlap = abs(np.vdot(expected, out.amplitudes))
        assert overlap == pytest.approx(1.0)

    def test_diagonal(self):
        psi = random_state(3, 1)
        m = qubo_to_ising(QuboProblem(np.array([[1.0, 0.2, 0], [0.2, -1, 0.4], [0, 0.4, 0.3]])))
        assert np.allclose(cost_unitary(psi, 1.3, m).probabilities(), psi.probabilities())


class TestMixer:
    def test_zero_beta(self):
        psi = random_state(2, 2)
        assert np.allclose(mixer_unitary(psi, 0.0).amplitudes, psi.amplitudes)

    def test_half_pi_flips_all(self):
        out = mixer_unitary(StateVector.zero(3), math.pi / 2)
        assert out.probabilities()[7] == pytest.approx(1.0)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_matches_expm(self, n):
        beta = 0.61
        psi = random_state(n, n)
        expected = expm(-1j * beta * dense_x_sum(n)) @ psi.amplitudes
        assert np.allclose(mixer_unitary(psi, beta).amplitudes, expected)


class TestAnsatz:
    def test_p0_uniform(self):
        psi = prepare_qaoa_state(field_model([1, 1, 1]), QaoaParams([], []))
        assert np.allclose(psi.probabilities(), 1 / 8)

    def test_zero_angles_uniform(self):
        psi = prepare_qaoa_state(field_model([1, -1]), QaoaParams([0, 0], [0, 0]))
        assert np.allclose(psi.probabilities(), 1 / 4)

    @pytest.mark.parametrize("gamma,beta", [(0.3, 0.2), (1.1, -0.7), (2.0, 0.4)])
    def test_single_qubit_closed_form(self, gamma, beta):
        psi = prepare_qaoa_state(field_model([1.0]), QaoaParams([gamma], [beta]))
        assert expectation_z(psi, 0) == pytest.approx(math.sin(2 * beta) * math.sin(2 * gamma), abs=1e-12)

    def test_params_vector_round_trip(self):
        p = QaoaParams([0.1, 0.2], [0.3, 0.4])
        assert np.array_equal(QaoaParams.from_vector(p.to_vector()).to_vector(), p.to_vector())
        with pytest.raises(InputError):
            QaoaParams([0.1], [0.2, 0.3])


class TestEnergy:
    def model(self):
        return qubo_to_ising(QuboProblem(np.array([[0.5, -0.3, 0.1], [-0.3, 0.2, 0.7], [0.1, 0.7, -0.4]])))

    def test_basis_state(self):
        m = self.model()
        psi = StateVector.from_bitstring("101")
        z = np.array([-1, 1, -1])
        assert energy_expectation(psi, m) == pytest.approx(m.energy(z))

    def test_uniform_is_offset(self):
        m = self.model()
        assert energy_expectation(plus_state(3), m) == pytest.approx(m.offset)

    def test_random_state_enumeration(self):
        m = self.model()
        psi = random_state(3, 9)
        total = 0.0
        for j, p in enumerate(psi.probabilities()):
            z = [1 - 2 * ((j >> q) & 1) for q in range(3)]
            total += p * m.energy(z)
        assert energy_expectation(psi, m) == pytest.approx(total)


class TestOptimizer:
    def test_fd_gradient_quadratic(self):
        g = fd_gradient(lambda v: float(v @ v), np.array([1.0, -2.0]), 1e-4)
        assert np.allclose(g, [2.0, -4.0], atol=1e-8)

    def test_best_so_far_monotone(self, rng):
        res = minimize_fd(lambda v: float(np.sum(np.sin(3 * v) + v * v)), 2, OptimizerConfig(iterations=30), rng)
        assert all(b <= a + 1e-15 for a, b in zip(res.trace, res.trace[1:]))

    def test_single_qubit_grid_oracle(self, rng):
        m = field_model([1.0])
        params, trace = optimize_params(m, 1, OptimizerConfig(iterations=200, learning_rate=0.1), rng)
        z = expectation_z(prepare_qaoa_state(m, params), 0)
        # grid search oracle over (gamma, beta)
        gs = np.linspace(0, math.pi, 181)
        best = min(math.sin(2 * b) * math.sin(2 * g) for g in gs for b in gs)
        assert best == pytest.approx(-1.0, abs=1e-3)
        assert z == pytest.approx(-1.0, abs=0.02)

    def test_zero_hamiltonian(self, rng):
        m = field_model([0.0, 0.0])
        res = optimize_qaoa(m, 2, OptimizerConfig(), rng)
        assert res.energy == 0.0
        assert len(set(res.trace)) == 1

    def test_p_must_be_positive(self, rng):
        with pytest.raises(InputError):
            optimize_qaoa(field_model([1.0]), 0, OptimizerConfig(), rng)

    def test_deterministic(self):
        m = field_model([1.0, -0.5])
        a = optimize_qaoa(m, 1, OptimizerConfig(iterations=20), RngStream(3))
        b = optimize_qaoa(m, 1, OptimizerConfig(iterations=20), RngStream(3))
        assert a.energy == b.energy and np.array_equal(a.params.to_vector(), b.params.to_vector())
