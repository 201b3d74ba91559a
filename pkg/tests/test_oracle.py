import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qawa.arith import SELU_LAMBDA
from qawa.errors import InputError, NumericalError
from qawa.optim import OptimizerConfig
from qawa.oracle import (
    ORACLE_SCALE_A,
    Batch,
    QawaOracle,
    TargetSpec,
    TrainingConfig,
    bayesian_posterior,
    cascade_for_linear,
    coin_mixture_expectation,
    default_encoder,
    effective_weights,
    estimate_expectation,
    fit_contraction,
    gradient,
    linear_from_cascade,
    loss,
    mixture_circuit_expectation,
    posterior_summary,
    postselected_distribution,
    project_capped,
    project_simplex,
    qawa_energy,
    recursive_weighted_sum,
    run_forward,
    sample_indices,
    train,
    train_weights,
)
from qawa.problem import QuboProblem, build_portfolio_qubo, qubo_to_ising, synthetic_portfolio
from qawa.qaoa import optimize_qaoa
from qawa.simcore import RngStream, StateVector, basis_bits


class Linear:
    """Identity activation stand-in."""

    def activate(self, u):
        return np.asarray(u, dtype=float)

    def derivative(self, u):
        return np.ones_like(np.asarray(u, dtype=float))


@pytest.fixture(scope="module")
def portfolio4():
    spec = synthetic_portfolio(4, RngStream(11))
    q = build_portfolio_qubo(spec).q
    ising = qubo_to_ising(QuboProblem(q / np.abs(q).max()))
    res = optimize_qaoa(ising, 2, OptimizerConfig(iterations=40, restarts=2), RngStream(12))
    return ising, res


@pytest.fixture(scope="module")
def trained4(portfolio4):
    ising, res = portfolio4
    o = QawaOracle(ising, res.params, coin_theta=math.pi / 2, coin_f="constant")
    o, trace = train(o, TargetSpec(0.0, "brute-force-alignment"), TrainingConfig(coin_f="constant", iterations=200),
                     RngStream(13))
    return o, trace


class TestClassicalAlgebra:
    def test_recursive_extremes(self):
        x = [0.3, -0.2, 0.9]
        assert recursive_weighted_sum(x, [1, 1]) == 0.3
        assert recursive_weighted_sum(x, [0, 0]) == 0.9

    def test_recursive_example(self):
        assert recursive_weighted_sum([1, 0, 1], [0.5, 0.5]) == pytest.approx(0.75)

    def test_recursive_length(self):
        with pytest.raises(InputError):
            recursive_weighted_sum([1, 2], [0.5, 0.5])

    @pytest.mark.parametrize("theta,expected", [(0, 2.0), (math.pi / 2, -1.0), (math.pi / 4, 0.5)])
    def test_coin_mixture(self, theta, expected):
        assert coin_mixture_expectation(theta, 2.0, -1.0) == pytest.approx(expected)

    def test_effective_weights(self):
        w0, w1 = np.array([0.2, 0.8]), np.array([0.6, 0.1])
        assert np.allclose(effective_weights(0.0, w0, w1), w0)
        assert np.allclose(effective_weights(math.pi, w0, w1), w1)
        assert np.allclose(effective_weights(math.pi / 2, w0, w1), (w0 + w1) / 2)

    @settings(max_examples=50)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=6))
    def test_linear_cascade_round_trip(self, raw):
        v = np.array(raw) / max(1.0, sum(raw) * 1.01)
        assert np.allclose(linear_from_cascade(cascade_for_linear(v)), v, atol=1e-12)

    def test_linear_over_budget(self):
        with pytest.raises(InputError):
            cascade_for_linear([0.7, 0.6])


class TestOracleConstruction:
    def test_defaults(self, portfolio4):
        ising, res = portfolio4
        o = QawaOracle(ising, res.params)
        assert np.allclose(o.weights, 0.25) and np.allclose(o.alt_weights, [1, 0, 0, 0])

    @pytest.mark.parametrize("kw", [{"weights": [0.5, 0.5]}, {"coin_theta": 2.0}, {"coin_f": "median"},
                                    {"sign_mask": [True]}, {"weights": [1.2, 0, 0, 0]}])
    def test_validation(self, portfolio4, kw):
        ising, res = portfolio4
        with pytest.raises(InputError):
            QawaOracle(ising, res.params, **kw)

    def test_encode_bits_sign(self, portfolio4):
        ising, res = portfolio4
        o = QawaOracle(ising, res.params, sign_mask=[True, False, False, False])
        assert o.encode_bits(np.array([[0, 0, 1, 1]])).tolist() == [[-1, 1, -1, -1]]


class TestForward:
    def test_theta_zero_is_raw_branch(self, portfolio4):
        ising, res = portfolio4
        o = QawaOracle(ising, res.params, weights=[0.1, 0.2, 0.3, 0.4], coin_theta=0.0)
        fr = run_forward(o, 64, RngStream(1))
        assert np.allclose(fr.y, default_encoder().activate(fr.x @ o.alt_weights), atol=1e-12)

    def test_deterministic_all_ones_state(self, portfolio4):
        ising, res = portfolio4

        class Fixed(QawaOracle):
            def qaoa_state(self):
                return StateVector.from_bitstring("1111")

        o = Fixed(ising, res.params, coin_theta=math.pi / 2, coin_f="constant")
        fr = run_forward(o, 32, RngStream(2))
        # all bits 1 -> every encoded value -1; uniform weights sum to -1
        expected = default_encoder().activate(-1.0)
        assert np.allclose(fr.y, expected, atol=1e-12)
        assert expected == pytest.approx(SELU_LAMBDA * 1.6733 * math.expm1(-1 / ORACLE_SCALE_A))

    def test_circuit_matches_classical_replay(self, trained4):
        o, _ = trained4
        fr = run_forward(o, 400, RngStream(3))
        c2 = np.cos(fr.theta) ** 2
        replay = default_encoder().activate(c2 * (fr.x @ o.alt_weights) + (1 - c2) * (fr.x @ o.weights))
        assert np.allclose(fr.y, replay, atol=1e-9)
        mean, se = estimate_expectation(fr.y)
        assert abs(mean - replay.mean()) <= 3 * se + 1e-12

    def test_classical_method_agrees(self, trained4):
        o, _ = trained4
        a = run_forward(o, 200, RngStream(4), method="circuit")
        b = run_forward(o, 200, RngStream(4), method="classical")
        assert np.array_equal(a.bits, b.bits)
        assert np.allclose(a.y, b.y, atol=1e-12)
        assert np.array_equal(a.readout, b.readout)

    def test_sequential_measurement(self, portfolio4):
        ising, res = portfolio4
        o = QawaOracle(ising, res.params, coin_f="constant")
        fr = run_forward(o, 300, RngStream(5), method="classical", sequential=True)
        p = o.qaoa_state().probabilities()
        freq = np.bincount((fr.bits << np.arange(4)).sum(axis=1), minlength=16) / 300
        assert np.max(np.abs(freq - p)) < 4 * math.sqrt(0.25 / 300)

    def test_reproducible(self, trained4):
        o, _ = trained4
        a = run_forward(o, 50, RngStream(6))
        b = run_forward(o, 50, RngStream(6))
        assert a.samples == b.samples and np.array_equal(a.y, b.y)

    @pytest.mark.parametrize("theta", np.linspace(0, math.pi / 2, 5))
    def test_mixture_formula(self, trained4, theta):
        o, _ = trained4
        o = replace(o, coin_f="constant")
        p = o.qaoa_state().probabilities()
        x = o.encode_bits(basis_bits(4))
        a, s = p @ (x @ o.alt_weights), p @ (x @ o.weights)
        assert mixture_circuit_expectation(o, theta) == pytest.approx(coin_mixture_expectation(theta, a, s), abs=1e-9)


class TestEstimator:
    def test_constant(self):
        mean, se = estimate_expectation([0.3] * 10)
        assert mean == pytest.approx(0.3) and se == pytest.approx(0.0, abs=1e-12)

    def test_bernoulli(self):
        y = RngStream(7).generator.integers(0, 2, 10_000)
        mean, _ = estimate_expectation(y)
        assert abs(mean - 0.5) <= 0.02

    @given(st.lists(st.floats(-1, 1), min_size=2, max_size=40).filter(lambda v: len(v) % 2 == 0))
    def test_halves(self, y):
        h = len(y) // 2
        full, _ = estimate_expectation(y)
        a, _ = estimate_expectation(y[:h])
        b, _ = estimate_expectation(y[h:])
        assert (a + b) / 2 == pytest.approx(full, abs=1e-12)

    def test_empty(self):
        with pytest.raises(InputError):
            estimate_expectation([])


def random_batch(g, n=4, size=12):
    return Batch(g.uniform(-1, 1, (size, n)), g.dirichlet(np.ones(size)))


class TestLossGradient:
    def test_zero_at_target(self):
        b = Batch(np.array([[1.0, -1.0], [0.5, 0.5]]))
        w = np.array([0.3, 0.6])
        enc = default_encoder()
        t = TargetSpec(enc.activate(b.x @ w), "user-supplied")
        assert loss(w, b, t) == 0.0
        assert np.allclose(gradient(w, b, t), 0.0, atol=1e-9)

    def test_permutation_invariant(self):
        g = np.random.default_rng(0)
        b = random_batch(g)
        perm = g.permutation(12)
        b2 = Batch(b.x[perm], b.weights[perm])
        w = np.full(4, 0.2)
        for t in (TargetSpec(0.1), TargetSpec(g.uniform(-1, 1, 12))):
            t2 = t if not t.vector else TargetSpec(t.y_target[perm])
            assert loss(w, b, t) == pytest.approx(loss(w, b2, t2), abs=1e-15)

    def test_two_sample_closed_form(self):
        x = np.array([[1.0, 0.0], [0.5, 1.0]])
        b = Batch(x)
        w = np.array([0.2, 0.7])
        y = 0.3
        # 0.5 * (0.2) + 0.5 * (0.1 + 0.7) = 0.5
        assert loss(w, b, TargetSpec(y), Linear()) == pytest.approx((0.5 - 0.3) ** 2)

    def test_single_sample_identity_gradient(self):
        x = np.array([[0.4, -0.3, 0.8]])
        w = np.array([0.1, 0.5, 0.2])
        yt = 0.25
        g = gradient(w, Batch(x), TargetSpec(yt), Linear())
        assert np.allclose(g, 2 * (x[0] @ w - yt) * x[0])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.booleans())
    def test_finite_difference(self, seed, vector):
        g = np.random.default_rng(seed)
        b = random_batch(g)
        w = project_capped(g.uniform(0, 0.3, 4))
        t = TargetSpec(g.uniform(-1, 1, 12) if vector else g.uniform(-0.5, 0.5))
        an = gradient(w, b, t)
        h = 1e-6
        fd = np.array([(loss(w + h * e, b, t) - loss(w - h * e, b, t)) / (2 * h) for e in np.eye(4)])
        assert np.max(np.abs(an - fd)) <= 1e-6 * max(np.max(np.abs(an)), 1e-3)


class TestProjection:
    @given(st.lists(st.floats(-3, 3), min_size=1, max_size=8))
    def test_capped_feasible(self, v):
        p = project_capped(np.array(v))
        assert np.all(p >= -1e-12) and np.all(p <= 1 + 1e-12) and p.sum() <= 1 + 1e-9

    @given(st.lists(st.floats(-3, 3), min_size=1, max_size=8))
    def test_simplex_sums_to_one(self, v):
        assert project_simplex(np.array(v)).sum() == pytest.approx(1.0)


class TestTraining:
    def test_zero_steps_at_target(self, portfolio4):
        ising, res = portfolio4
        o = QawaOracle(ising, res.params, coin_f="constant")
        cfg = TrainingConfig(coin_f="constant", shots=256, tolerance=0.0)
        # initial estimator value on the batch train() will draw
        idx = sample_indices(o.qaoa_state(), 256, RngStream(8).child(0))
        x = o.encode_bits(((idx[:, None] >> np.arange(4)) & 1))
        idx_y = float(default_encoder().activate(x @ o.weights).mean())
        o2, trace = train(o, TargetSpec(idx_y), cfg, RngStream(8))
        assert trace.converged_at == 0
        assert np.array_equal(o2.weights, o.weights)

    @pytest.mark.parametrize("target", [(0.31547798, 0.01962489, 0.20088612, 0.46401101)])
    def test_weight_reconstruction(self, target):
        from qawa.experiments import reconstruct_weights

        w, trace = reconstruct_weights(target)
        assert np.linalg.norm(w - np.array(target)) < 1e-6
        assert len(trace.losses) - 1 <= 500

    def test_contraction_envelope(self):
        # samples with nonnegative pre-activations keep the loss exactly quadratic
        b = math.sqrt(0.15)
        batch = Batch(np.array([[1.0, 0.0], [0.0, b]]))
        enc = default_encoder()
        w_star = np.array([0.3, 0.4])
        target = TargetSpec(enc.activate(batch.x @ w_star))
        lip = (SELU_LAMBDA / ORACLE_SCALE_A) ** 2  # largest Hessian eigenvalue
        cfg = TrainingConfig(eta=1.0 / lip, iterations=60, tolerance=0.0)
        _, trace = train_weights([0.5, 0.5], batch, target, cfg, enc)
        losses = np.array(trace.losses)
        mu_over_l = 0.15
        envelope = losses[0] * (1 - mu_over_l) ** np.arange(losses.size)
        assert np.all(losses <= envelope + 1e-18)
        assert fit_contraction(losses, skip=1) == pytest.approx(0.15, abs=0.1)

    def test_divergence_raises(self):
        batch = Batch(np.array([[1.0, 1.0]]))
        cfg = TrainingConfig(eta=1e6, iterations=5, projection="clip", divergence_factor=1.0 + 1e-9)
        with pytest.raises(NumericalError) as err:
            train_weights([0.0, 0.0], batch, TargetSpec(0.9), cfg, Linear())
        assert err.value.trace

    def test_brute_force_training_improves_energy(self, trained4, portfolio4):
        o, trace = trained4
        _, res = portfolio4
        assert trace.best_losses[-1] <= trace.losses[0]
        assert qawa_energy(o) <= res.energy + 1e-12

    def test_unknown_target_source(self):
        with pytest.raises(InputError):
            TargetSpec(0.0, "oracle")


class TestPosterior:
    def test_equal_likelihoods(self):
        assert bayesian_posterior("0101", 0.3, 0.3, 0.5) == 0.5

    def test_zero_raw_likelihood(self):
        assert bayesian_posterior("0", 0.0, 0.2, 0.3) == 1.0

    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
    def test_in_unit_interval(self, l0, l1, prior):
        if l0 == 0 and l1 == 0:
            return
        assert 0.0 <= bayesian_posterior(None, l0, l1, prior) <= 1.0

    def test_invalid(self):
        with pytest.raises(InputError):
            bayesian_posterior(None, -0.1, 0.2, 0.5)
        with pytest.raises(InputError):
            bayesian_posterior(None, 0.1, 0.2, 1.5)

    def test_posterior_exceeds_prior_after_training(self, trained4):
        o, _ = trained4
        mixed = replace(o, coin_theta=math.pi / 8, coin_f="constant")
        post, prior = posterior_summary(mixed, 4096, RngStream(9))
        assert prior == pytest.approx(math.sin(math.pi / 8) ** 2)
        assert post > prior

    def test_postselected_is_distribution(self, trained4):
        o, _ = trained4
        p = postselected_distribution(o)
        assert p.sum() == pytest.approx(1.0) and np.all(p >= 0)
