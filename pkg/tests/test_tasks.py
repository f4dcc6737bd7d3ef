import math

import numpy as np
import pytest

from diffusionlab.tasks import (
    TabularMarkovModel,
    TaskError,
    TaskSpec,
    build_parallel_task,
    build_serial_task,
    circular_distance,
    default_answer_positions,
    read_model,
    sample_trajectory,
    serial_step,
    skip_conditional,
    write_model,
)

from oracles import enumerate_skip


def identity_chain(m=8, length=6):
    spec = TaskSpec(kind="serial", m=m, length=length, a=1, b=0, eta=0.0)
    return build_serial_task(spec)


class TestTaskSpec:
    def test_defaults_answer_positions(self):
        spec = TaskSpec(kind="serial", m=8, length=16, a=3)
        assert spec.answer_positions == (14, 15)
        assert default_answer_positions(8) == (7,)

    def test_rejects_non_coprime_multiplier(self):
        with pytest.raises(TaskError):
            TaskSpec(kind="serial", m=8, length=4, a=2)

    def test_rejects_noise_outside_range(self):
        with pytest.raises(TaskError):
            TaskSpec(kind="serial", m=8, length=4, a=3, eta=1.0)
        with pytest.raises(TaskError):
            TaskSpec(kind="serial", m=8, length=4, a=3, eta=-0.1)

    def test_rejects_parallel_with_unit_bucket(self):
        with pytest.raises(TaskError):
            TaskSpec(kind="parallel", m=8, length=4, w=1)

    def test_rejects_non_divisor_bucket(self):
        with pytest.raises(TaskError):
            TaskSpec(kind="parallel", m=8, length=4, w=3)

    def test_rejects_answer_positions_out_of_range(self):
        with pytest.raises(TaskError):
            TaskSpec(kind="serial", m=8, length=4, a=3, answer_positions=(4,))

    def test_text_round_trip(self):
        spec = TaskSpec(kind="parallel", m=64, length=16, w=8, eta=0.05, b=2)
        parsed = TaskSpec.from_text(spec.to_text())
        assert parsed == spec

    def test_text_rejects_unknown_key(self):
        with pytest.raises(TaskError):
            TaskSpec.from_text("kind = serial\nm = 8\nlength = 4\nbogus = 1\n")


class TestSerialTask:
    def test_identity_chain_is_identity_matrix(self):
        model = identity_chain()
        assert np.array_equal(model.transition, np.eye(8))
        for k in range(2, model.length + 1):
            row = skip_conditional(model, 3, k)
            assert row[3] == 1.0

    def test_direct_map_evaluation(self):
        spec = TaskSpec(kind="serial", m=64, length=8, a=3, b=1, eta=0.0)
        model = build_serial_task(spec)
        assert serial_step(spec, 5) == 16
        assert np.argmax(skip_conditional(model, 5, 2)) == 16

    def test_neighboring_starts_diverge_at_rate_a(self):
        # Iterate the map explicitly for both seeds and compare at step 4.
        spec = TaskSpec(kind="serial", m=64, length=8, a=3, b=1, eta=0.0)
        model = build_serial_task(spec)
        s, s_prime = 5, 6
        for _ in range(3):
            s, s_prime = serial_step(spec, s), serial_step(spec, s_prime)
        assert circular_distance(s, s_prime, 64) == 27
        reference = int(np.argmax(skip_conditional(model, 5, 4)))
        assert skip_conditional(model, 6, 4)[reference] == 0.0

    def test_kind_mismatch_rejected(self):
        spec = TaskSpec(kind="parallel", m=8, length=4, w=2)
        with pytest.raises(TaskError):
            build_serial_task(spec)


class TestParallelTask:
    def test_same_bucket_rows_identical(self):
        spec = TaskSpec(kind="parallel", m=64, length=8, w=8, eta=0.0)
        model = build_parallel_task(spec)
        for k in range(2, 6):
            a = skip_conditional(model, 3, k)
            b = skip_conditional(model, 4, k)
            assert np.array_equal(a, b)
        reference = int(np.argmax(skip_conditional(model, 3, 5)))
        assert skip_conditional(model, 4, 5)[reference] == 1.0

    def test_invariance_constant_with_noise_matches_matrix_square(self):
        # C at k=3 under eta=0.1: read the entry off an independently
        # squared matrix and compare with brute-force path enumeration.
        spec = TaskSpec(kind="parallel", m=64, length=8, w=8, eta=0.1)
        model = build_parallel_task(spec)
        s1 = 3
        reference = int(np.argmax(skip_conditional(model, s1, 3)))
        same_bucket = [s for s in range(8) if s != s1]
        values = [skip_conditional(model, s, 3)[reference] for s in same_bucket]
        squared = model.transition @ model.transition
        for s, value in zip(same_bucket, values):
            assert value == pytest.approx(squared[s, reference], abs=1e-15)
        # dominant no-noise mass is (1-eta)^2 plus the uniform-return term
        assert values[0] > 0.81

    def test_row_stochastic_sweep(self):
        for spec in (
            TaskSpec(kind="serial", m=32, length=4, a=5, b=7, eta=0.3),
            TaskSpec(kind="parallel", m=32, length=4, w=4, eta=0.3),
            TaskSpec(kind="parallel", m=64, length=4, w=8, eta=0.0),
        ):
            model = build_serial_task(spec) if spec.kind == "serial" else build_parallel_task(spec)
            assert np.abs(model.transition.sum(axis=1) - 1.0).max() <= 1e-12
            assert abs(model.initial.sum() - 1.0) <= 1e-12


class TestSkipConditional:
    def test_one_step_equals_transition_row(self):
        spec = TaskSpec(kind="serial", m=16, length=4, a=3, b=2, eta=0.2)
        model = build_serial_task(spec)
        assert np.array_equal(skip_conditional(model, 7, 2), model.transition[7])

    def test_matches_path_enumeration_on_random_model(self):
        rng = np.random.default_rng(42)
        transition = rng.dirichlet(np.ones(6), size=6)
        initial = rng.dirichlet(np.ones(6))
        model = TabularMarkovModel(m=6, initial=initial, transition=transition, length=5)
        for s1 in range(6):
            expected = enumerate_skip(transition, s1, 3)
            np.testing.assert_allclose(skip_conditional(model, s1, 4), expected, atol=1e-12)

    def test_exhaustive_small_models(self):
        rng = np.random.default_rng(7)
        for m in (2, 3, 5, 8):
            transition = rng.dirichlet(np.ones(m), size=m)
            initial = rng.dirichlet(np.ones(m))
            model = TabularMarkovModel(m=m, initial=initial, transition=transition, length=5)
            for k in range(2, 6):
                for s1 in range(m):
                    expected = enumerate_skip(transition, s1, k - 1)
                    np.testing.assert_allclose(
                        skip_conditional(model, s1, k), expected, atol=1e-12
                    )

    def test_rejects_out_of_range(self):
        model = identity_chain()
        with pytest.raises(TaskError):
            skip_conditional(model, 0, 1)
        with pytest.raises(TaskError):
            skip_conditional(model, 0, model.length + 1)
        with pytest.raises(TaskError):
            skip_conditional(model, 8, 3)

    def test_serial_sensitivity_invariant(self):
        spec = TaskSpec(kind="serial", m=64, length=8, a=3, b=1, eta=0.0)
        model = build_serial_task(spec)
        s1 = 11
        for s_prime in (10, 12, 20):
            d = circular_distance(s1, s_prime, 64)
            for k in range(2, 8):
                reference = int(np.argmax(skip_conditional(model, s1, k)))
                if (3 ** (k - 1) * d) % 64 != 0:
                    assert skip_conditional(model, s_prime, k)[reference] == 0.0

    def test_parallel_invariance_property(self):
        spec = TaskSpec(kind="parallel", m=32, length=6, w=4, eta=0.0)
        model = build_parallel_task(spec)
        for bucket in range(8):
            base = bucket * 4
            for k in range(2, 7):
                rows = [skip_conditional(model, base + j, k) for j in range(4)]
                for row in rows[1:]:
                    assert np.array_equal(rows[0], row)


class TestSampling:
    def test_identity_chain_point_mass(self):
        initial = np.zeros(8)
        initial[4] = 1.0
        model = TabularMarkovModel(m=8, initial=initial, transition=np.eye(8), length=6)
        sample = sample_trajectory(model, seed=123)
        assert np.array_equal(sample.states, np.full(6, 4))
        assert sample.log_prob == 0.0

    def test_determinism(self):
        spec = TaskSpec(kind="serial", m=32, length=12, a=3, b=1, eta=0.2)
        model = build_serial_task(spec)
        a = sample_trajectory(model, seed=999)
        b = sample_trajectory(model, seed=999)
        assert np.array_equal(a.states, b.states)
        assert a.log_prob == b.log_prob

    def test_log_prob_matches_chain_rule(self):
        spec = TaskSpec(kind="serial", m=16, length=10, a=3, b=5, eta=0.4)
        model = build_serial_task(spec)
        sample = sample_trajectory(model, seed=5)
        expected = math.log(model.initial[sample.states[0]])
        for t in range(1, 10):
            expected += math.log(model.transition[sample.states[t - 1], sample.states[t]])
        assert sample.log_prob == pytest.approx(expected, abs=1e-12)

    def test_empirical_frequencies_match_marginal(self):
        # m=4 uniform chain: S_2 should be uniform to within 0.01 over 1e5 draws.
        m = 4
        model = TabularMarkovModel(
            m=m,
            initial=np.full(m, 0.25),
            transition=np.full((m, m), 0.25),
            length=2,
        )
        counts = np.zeros(m)
        for seed in range(100_000):
            counts[sample_trajectory(model, seed).states[1]] += 1
        freqs = counts / counts.sum()
        assert np.abs(freqs - 0.25).max() < 0.01


class TestModelValidation:
    def test_rejects_bad_rows(self):
        bad = np.eye(4)
        bad[2, 2] = 0.9999
        with pytest.raises(TaskError):
            TabularMarkovModel(m=4, initial=np.full(4, 0.25), transition=bad, length=3)

    def test_rejects_negative_entries(self):
        t = np.eye(3)
        t[0, 0] = 1.5
        t[0, 1] = -0.5
        with pytest.raises(TaskError):
            TabularMarkovModel(m=3, initial=np.full(3, 1 / 3), transition=t, length=3)

    def test_arrays_frozen(self):
        model = identity_chain()
        with pytest.raises(ValueError):
            model.transition[0, 0] = 0.5


class TestModelFiles:
    def test_round_trip_exact(self, tmp_path):
        spec = TaskSpec(kind="serial", m=16, length=7, a=5, b=3, eta=0.137)
        model = build_serial_task(spec)
        path = tmp_path / "model.txt"
        write_model(model, path)
        loaded = read_model(path)
        assert loaded.m == model.m
        assert loaded.length == model.length
        assert np.array_equal(loaded.initial, model.initial)
        assert np.array_equal(loaded.transition, model.transition)

    def test_rejects_truncated_file(self, tmp_path):
        path = tmp_path / "model.txt"
        path.write_text("4 3\n0.25 0.25 0.25 0.25\n")
        with pytest.raises(TaskError):
            read_model(path)
