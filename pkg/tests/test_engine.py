import math

import numpy as np
import pytest

from mspafl import accountant, data, engine, model
from mspafl.accountant import SubsampleMode
from mspafl.engine import ExperimentConfig, aggregate, check_in, correction_factor
from mspafl.errors import ConfigError, DegenerateParameterError, InvalidSpecError


@pytest.fixture(scope="module")
def fixture_data(request):
    return data.load_csv(request.path.parent / "fixtures" / "mini.csv")


def base_config(**overrides):
    fields = dict(
        num_clients=8,
        rounds=5,
        check_in_prob=0.5,
        local_steps=2,
        batch_size=3,
        subsample_mode=SubsampleMode.WOR,
        eps_local=1.0,
        delta_local=1e-4,
        clip_threshold=1.0,
        learning_rate=0.2,
        split_fraction=0.5,
        hoeffding_beta=0.5,
        composition_delta=1e-4,
        master_seed=42,
    )
    fields.update(overrides)
    return ExperimentConfig(**fields)


class TestCheckIn:
    def test_certain_participation(self):
        assert all(check_in(1.0, i, t, 0) for i in range(5) for t in range(5))

    def test_never_participates(self):
        assert not any(check_in(0.0, i, t, 0) for i in range(5) for t in range(5))

    def test_empirical_frequency(self):
        draws = 10**5
        hits = sum(check_in(0.3, 0, t, 99) for t in range(draws))
        assert abs(hits / draws - 0.3) <= 0.005

    def test_deterministic(self):
        flips = [check_in(0.5, 3, t, 7) for t in range(50)]
        assert flips == [check_in(0.5, 3, t, 7) for t in range(50)]


class TestCorrectionFactor:
    def test_two_halves(self):
        assert correction_factor([0.5, 0.5]) == pytest.approx(0.75, rel=1e-14)

    def test_any_certain_client_saturates(self):
        assert correction_factor([0.2, 1.0, 0.1]) == 1.0

    def test_single_client(self):
        assert correction_factor([0.3]) == pytest.approx(0.3, rel=1e-14)

    def test_all_zero_degenerate(self):
        with pytest.raises(DegenerateParameterError):
            correction_factor([0.0, 0.0])


class TestAggregate:
    def test_single_certain_participant(self):
        v = np.array([1.0, -2.0])
        out = aggregate({0: v}, [1.0])
        assert np.array_equal(out, v)

    def test_mean_of_equal_vectors(self):
        v = np.array([0.5, 0.25])
        out = aggregate({0: v, 1: v}, [1.0, 1.0])
        assert out == pytest.approx(v, rel=1e-15)

    def test_correction_divides(self):
        v = np.array([2.0])
        out = aggregate({0: v}, [0.5, 0.5])  # nu = 0.75
        assert out == pytest.approx([2.0 / 0.75], rel=1e-14)

    def test_empty_rejected(self):
        with pytest.raises(InvalidSpecError):
            aggregate({}, [0.5])

    def test_order_independent(self):
        gen = np.random.default_rng(0)
        vs = {i: gen.normal(size=4) for i in range(6)}
        probs = [0.5] * 6
        a = aggregate(dict(sorted(vs.items())), probs)
        b = aggregate(dict(sorted(vs.items(), reverse=True)), probs)
        assert np.array_equal(a, b)

    def test_monte_carlo_unbiased(self):
        # all clients submit v; empty rounds contribute 0; mean -> v
        v = 1.0
        probs = [0.5] * 5
        nu = correction_factor(probs)
        draws = 2 * 10**4
        total = 0.0
        for t in range(draws):
            k = sum(check_in(0.5, i, t, 123) for i in range(5))
            if k:
                total += v / nu  # aggregate of k copies of v is v/nu
        mean = total / draws
        std_err = np.sqrt(v / nu) / np.sqrt(draws)  # conservative scale
        assert abs(mean - v) <= 3 * max(std_err, 0.01)


class TestValidation:
    def test_all_problems_reported_at_once(self):
        config = base_config(
            num_clients=0, rounds=-1, eps_local=-2.0, clip_threshold=0.0, split_fraction=1.5
        )
        problems = engine.validate_config(config)
        text = "\n".join(problems)
        assert len(problems) >= 5
        assert "num_clients" in text and "rounds" in text
        assert "eps_local" in text and "clip_threshold" in text and "split_fraction" in text

    def test_out_of_regime_eps_names_the_bound(self):
        problems = engine.validate_config(base_config(eps_local=1.5))
        assert any("proven" in p and "allow" in p for p in problems)
        assert not engine.validate_config(base_config(eps_local=1.5, allow_extrapolation=True))

    def test_degenerate_hoeffding_names_min_n(self):
        problems = engine.validate_config(base_config(hoeffding_beta=0.01))
        assert any(">= 1" in p and "need N" in p for p in problems)

    def test_wor_feasibility_against_client_sizes(self):
        problems = engine.validate_config(base_config(), client_sizes=[10, 6])
        assert problems == []
        problems = engine.validate_config(base_config(batch_size=3, local_steps=2), client_sizes=[5])
        assert any("WOR infeasible" in p for p in problems)

    def test_all_zero_probs_rejected(self):
        problems = engine.validate_config(base_config(check_in_prob=0.0))
        assert any("zero" in p for p in problems)

    def test_prob_list_length_must_match_clients(self):
        problems = engine.validate_config(base_config(check_in_prob=(0.5, 0.5)))
        assert any("entries" in p for p in problems)

    def test_prepare_raises_config_error(self, fixture_data):
        x, y = fixture_data
        with pytest.raises(ConfigError):
            engine.prepare_state(base_config(eps_local=-1.0), x, y)


class TestRunExperiment:
    def test_zero_rounds(self, fixture_data):
        x, y = fixture_data
        result = engine.run_experiment(base_config(rounds=0), x, y)
        assert result.traces == []
        assert result.total.global_total_eps == 0.0
        assert result.total.rounds == 0

    def test_deterministic_traces(self, fixture_data):
        x, y = fixture_data
        a = engine.run_experiment(base_config(), x, y)
        b = engine.run_experiment(base_config(), x, y)
        for ta, tb in zip(a.traces, b.traces):
            assert ta.participants == tb.participants
            assert np.array_equal(ta.global_public, tb.global_public)
            assert ta.test_accuracy == tb.test_accuracy
            assert ta.train_loss == tb.train_loss

    def test_round_privacy_matches_accountant(self, fixture_data):
        x, y = fixture_data
        config = base_config()
        result = engine.run_experiment(config, x, y)
        state = engine.prepare_state(config, x, y)
        expected = accountant.central_round_privacy(
            list(zip(state.probs, state.ratios)),
            config.eps_local,
            config.delta_local,
            config.hoeffding_beta,
        )
        for trace in result.traces:
            if trace.participants:
                assert trace.eps_central_round == expected.eps_central
                assert trace.delta_central_round == expected.delta_central
            else:
                assert trace.eps_central_round == 0.0

    def test_total_report_matches_strong_composition(self, fixture_data):
        x, y = fixture_data
        config = base_config(rounds=7)
        result = engine.run_experiment(config, x, y)
        eps, delta = accountant.strong_composition(
            result.total.worst_round_eps,
            result.total.worst_round_delta,
            config.rounds,
            config.composition_delta,
        )
        assert result.total.global_total_eps == eps
        assert result.total.global_total_delta == delta
        assert result.total.rounds == config.rounds

    def test_transmitted_payload_is_public_dimension(self, fixture_data):
        x, y = fixture_data
        config = base_config()
        state = engine.prepare_state(config, x, y)
        dim = state.loss_spec.dimension
        assert state.public_dim < dim
        for t in range(3):
            trace = engine.run_round(state, t)
            assert trace.global_public.shape == (state.public_dim,)

    def test_private_blocks_persist_per_client(self, fixture_data):
        x, y = fixture_data
        config = base_config(check_in_prob=(1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0), noiseless=True)
        state = engine.prepare_state(config, x, y)
        engine.run_round(state, 0)
        engine.run_round(state, 1)
        # client 1 never participates: its private block stays at init
        assert np.array_equal(state.private_blocks[1], np.zeros(state.private_dim))
        assert not np.array_equal(state.private_blocks[0], np.zeros(state.private_dim))

    def test_empty_round_carries_model_forward(self, fixture_data):
        x, y = fixture_data
        # seed chosen so some round has no participants at p=0.05
        config = base_config(check_in_prob=0.05, rounds=12, noiseless=True)
        result = engine.run_experiment(config, x, y)
        empties = [t for t in result.traces if not t.participants]
        assert empties, "expected at least one empty round at p=0.05"
        for trace in empties:
            prev = result.traces[trace.round_index - 1] if trace.round_index else None
            assert trace.eps_central_round == 0.0
            assert trace.delta_central_round == 0.0
            if prev is not None:
                assert np.array_equal(trace.global_public, prev.global_public)

    def test_eps_c_total_is_running_composition(self, fixture_data):
        x, y = fixture_data
        config = base_config(rounds=6)
        result = engine.run_experiment(config, x, y)
        worst_eps = worst_delta = 0.0
        for trace in result.traces:
            worst_eps = max(worst_eps, trace.eps_central_round)
            worst_delta = max(worst_delta, trace.delta_central_round)
            expected, _ = accountant.strong_composition(
                worst_eps, worst_delta, trace.round_index + 1, config.composition_delta
            )
            assert trace.eps_central_total == expected

    def test_eps_local_max_tracks_closed_form(self, fixture_data):
        x, y = fixture_data
        config = base_config(rounds=4)
        result = engine.run_experiment(config, x, y)
        state = engine.prepare_state(config, x, y)
        for trace in result.traces:
            expected = max(
                accountant.total_local_epsilon_closed_form(
                    q, p, trace.round_index + 1, config.eps_local, config.delta_local,
                    config.clip_threshold,
                )
                for p, q in zip(state.probs, state.ratios)
            )
            assert trace.eps_local_max == pytest.approx(expected, rel=1e-12)

    def test_noiseless_public_only_full_participation_reduces_to_fedavg(self, fixture_data):
        """Orchestration degeneracy: p=1, zero noise, no private block, huge
        clip threshold must replay plain FedAvg exactly."""
        x, y = fixture_data
        config = base_config(
            check_in_prob=1.0,
            noiseless=True,
            public_only=True,
            clip_threshold=1e9,
            rounds=6,
        )
        result = engine.run_experiment(config, x, y)

        # independent FedAvg reference on the same partition and batch plans
        train_x, train_y, test_x, test_y = data.holdout_split(
            x, y, config.holdout_fraction, config.master_seed
        )
        clients = data.partition(train_x, train_y, config.num_clients, config.master_seed)
        spec = model.LossSpec(feature_dim=x.shape[1], label_dim=1)
        global_w = np.zeros(spec.dimension)
        for t in range(config.rounds):
            locals_ = []
            for c in clients:
                w = global_w.copy()
                plan = data.make_batch_plan(
                    c, config.local_steps, config.batch_size, config.subsample_mode,
                    config.master_seed, t,
                )
                for idx in plan.batches:
                    w = w - config.learning_rate * model.gradient_flat(w, c.batch(idx), spec)
                locals_.append(w)
            global_w = np.stack(locals_).sum(axis=0) / len(locals_)
            assert np.array_equal(result.traces[t].global_public, global_w)

    def test_baseline_runs_and_reports_unamplified_privacy(self, fixture_data):
        x, y = fixture_data
        config = base_config(algorithm="dp-fedavg", rounds=4)
        result = engine.run_experiment(config, x, y)
        assert all(len(t.participants) == 4 for t in result.traces)  # round(0.5*8)
        assert all(t.eps_central_round == config.eps_local for t in result.traces)
        assert result.traces[-1].eps_local_max > 0

    def test_extrapolated_flag_propagates(self, fixture_data):
        x, y = fixture_data
        config = base_config(eps_local=1.2, allow_extrapolation=True)
        result = engine.run_experiment(config, x, y)
        assert result.total.extrapolated


class TestMeanAccuracy:
    def test_perfect_and_chance(self):
        x = np.array([[1.0], [-1.0], [2.0], [-2.0]])
        y = np.array([1.0, -1.0, 1.0, -1.0])
        good = np.array([[1.0]])
        assert engine.mean_accuracy(good, x, y) == 1.0
        bad = np.array([[-1.0]])
        assert engine.mean_accuracy(bad, x, y) == 0.0

    def test_average_over_models(self):
        x = np.array([[1.0], [-1.0]])
        y = np.array([1.0, -1.0])
        models = np.array([[1.0], [-1.0]])
        assert engine.mean_accuracy(models, x, y) == 0.5
