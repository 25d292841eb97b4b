"""
Tests for the autoregressive weekly mobility generator.
"""

import os
import sys

import numpy as np
import pytest
from scipy.special import softmax
from scipy.stats import chisquare

# Add the parent directory to the path so we can import our modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from schedule_attention import EncoderConfig
from schedule_domain import AT_HOME_LABEL, STEPS_PER_WEEK, PersonAttributes, WeeklySchedule, mobility_alphabet
from schedule_io import SyntheticPersonaSpec, default_persona_cells, make_synthetic_corpus
from schedule_models import (
    GeneratorModel,
    ModelConfig,
    ModelStateError,
    NumericalError,
    TrainingConfig,
    evaluate_generator,
    generate,
    generate_for_attributes,
    next_step_logits,
    paired_weeks,
    sample_categorical,
    sequence_rngs,
    teacher_forced_loss,
    train_generator,
)


def tiny_config(**training):
    options = dict(max_epochs=2, batch_size=4, micro_batch=2, patience=2)
    options.update(training)
    return ModelConfig(
        encoder=EncoderConfig(layers=1, d_model=8, heads=2, dropout=0.0),
        training=TrainingConfig(**options),
        state_embed_dim=4,
        weekday_embed_dim=2,
        age_embed_dim=2,
        occupation_embed_dim=2,
    )


@pytest.fixture(scope="module")
def weeks():
    schedules, _ = make_synthetic_corpus(SyntheticPersonaSpec(cells=default_persona_cells()), 4, seed=3)
    return schedules


REORDERED_LABELS = (
    "work/education",
    "driving car",
    AT_HOME_LABEL,
    "shopping/errands",
    "leisure/other place",
    "on the way (non-car)",
)


def skewed_model(bias):
    model = GeneratorModel.initialise(tiny_config(), seed=0)
    model.params["head.b"].data[:] = bias
    model.trained = True
    return model


class TestSampling:
    def test_temperature_zero_is_argmax(self):
        logits = np.array([[0.1, 3.0, -1.0], [5.0, 0.0, 0.0]])
        out = sample_categorical(logits, sequence_rngs(0, 0, 2), temperature=0.0)
        np.testing.assert_array_equal(out, [1, 0])

    def test_tiny_temperature_is_greedy(self):
        logits = np.array([[1.0, 2.0, 0.5], [0.0, 500.0, 1000.0]])
        for temperature in (1e-310, 1e-12):
            out = sample_categorical(logits, sequence_rngs(0, 0, 2), temperature=temperature)
            np.testing.assert_array_equal(out, [1, 2])

    def test_small_temperature_stays_finite(self):
        logits = np.array([[0.0, 500.0, 1000.0]])
        out = sample_categorical(logits, sequence_rngs(0, 0, 1), temperature=1e-6)
        np.testing.assert_array_equal(out, [2])

    def test_negative_temperature(self):
        with pytest.raises(ValueError, match="temperature"):
            sample_categorical(np.zeros((1, 3)), sequence_rngs(0, 0, 1), temperature=-0.5)

    def test_exponential_race_frequencies(self):
        probs = np.array([0.5, 0.3, 0.15, 0.05])
        logits = np.tile(np.log(probs), (20000, 1))
        draws = sample_categorical(logits, sequence_rngs(1, 0, 20000))
        counts = np.bincount(draws, minlength=4)
        assert chisquare(counts, probs * 20000).pvalue > 0.001

    def test_streams_independent_of_batch_start(self):
        a = sequence_rngs(5, 0, 4)[3].random(3)
        b = sequence_rngs(5, 3, 1)[0].random(3)
        np.testing.assert_array_equal(a, b)


class TestGeneratorModel:
    def test_initial_loss_near_log_k(self, weeks):
        model = GeneratorModel.initialise(tiny_config(), seed=1)
        loss, accuracy = teacher_forced_loss(model, weeks)
        assert abs(loss - np.log(6)) < 0.05
        assert 0.0 <= accuracy <= 1.0

    def test_bos_is_extra_embedding_row(self):
        model = GeneratorModel.initialise(tiny_config(), seed=0)
        assert model.bos_code == 6
        assert model.params["input.state"].shape[0] == 7
        inputs = model.shifted_inputs(np.arange(STEPS_PER_WEEK) % 6)
        assert inputs[0, 0] == 6 and inputs[0, 1] == 0

    def test_short_max_len_rejected(self):
        config = ModelConfig(encoder=EncoderConfig(d_model=8, heads=2, max_len=100))
        with pytest.raises(ValueError, match="max_len"):
            GeneratorModel.initialise(config)

    def test_untrained_model_cannot_generate(self):
        model = GeneratorModel.initialise(tiny_config(), seed=0)
        with pytest.raises(ModelStateError):
            generate(model, PersonAttributes(0, 0), 1, seed=0)

    def test_n_must_be_positive(self):
        with pytest.raises(ValueError, match="positive"):
            generate(skewed_model(0.0), PersonAttributes(0, 0), 0, seed=0)


class TestGeneration:
    def test_deterministic_and_batch_independent(self):
        model = skewed_model(0.0)
        attrs = [PersonAttributes(i, i, f"p{i}") for i in range(3)]
        a = generate_for_attributes(model, attrs, seed=9, batch_size=3)
        b = generate_for_attributes(model, attrs, seed=9, batch_size=1)
        assert all(x == y for x, y in zip(a, b))
        c = generate_for_attributes(model, attrs, seed=10, batch_size=3)
        assert any(not np.array_equal(x.states, y.states) for x, y in zip(a, c))

    def test_output_records(self):
        model = skewed_model(0.0)
        out = generate(model, PersonAttributes(2, 3, "x"), 2, seed=0)
        assert len(out) == 2
        for week in out:
            assert week.states.shape == (STEPS_PER_WEEK,)
            assert week.attributes == PersonAttributes(2, 3, "x")
            assert week.states.min() >= 0 and week.states.max() < 6

    def test_temperature_zero_follows_dominant_logit(self):
        model = skewed_model(np.array([0.0, 0.0, 20.0, 0.0, 0.0, 0.0]))
        week = generate(model, PersonAttributes(0, 0), 1, seed=0, temperature=0.0)[0]
        assert np.all(week.states == 2)

    def test_first_step_matches_model_distribution(self):
        """First-step frequencies agree with softmax of the step-0 logits."""
        model = skewed_model(np.array([1.5, 0.5, 0.0, -0.5, 0.0, -1.0]))
        attrs = PersonAttributes(1, 1)
        probs = softmax(next_step_logits(model, [], attrs))
        n = 1200
        weeks = generate(model, attrs, n, seed=4)
        counts = np.bincount([w.states[0] for w in weeks], minlength=6)
        assert chisquare(counts, probs * n).pvalue > 0.001

    def test_history_too_long(self):
        with pytest.raises(ValueError, match="shorter"):
            next_step_logits(skewed_model(0.0), np.zeros(STEPS_PER_WEEK), PersonAttributes(0, 0))

    def test_evaluate_generator_pairs_reference(self, weeks):
        report = evaluate_generator(skewed_model(0.0), weeks, n=5, seed=1)
        assert report.n_generated == report.n_reference == 5
        assert report.hd_mae is not None


class TestTraining:
    def test_same_seed_same_parameters(self, weeks):
        a, report_a = train_generator(weeks, None, 0, tiny_config(), seed=2)
        b, report_b = train_generator(weeks, None, 0, tiny_config(), seed=2)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name].data, b.params[name].data)
        assert report_a.val_loss == report_b.val_loss
        assert a.trained

    def test_report_fields(self, weeks):
        _, report = train_generator(weeks, None, 0, tiny_config(max_epochs=3, patience=5), seed=0)
        assert len(report.val_loss) == 3
        assert 1 <= report.best_epoch <= 3
        assert report.best_loss == min(report.val_loss)
        assert report.learning_rate == 0.001

    def test_constant_corpus_is_reproduced(self):
        home = [
            WeeklySchedule(np.zeros(STEPS_PER_WEEK), PersonAttributes(0, 0, f"p{i}"), mobility_alphabet())
            for i in range(6)
        ]
        config = tiny_config(max_epochs=5, batch_size=1, micro_batch=1, learning_rate=0.05, patience=5)
        model, _ = train_generator(home, None, 0, config, seed=0)
        week = generate(model, PersonAttributes(0, 0), 1, seed=0, temperature=0.0)[0]
        assert np.all(week.states == 0)

    def test_invalid_corpus(self):
        bad = [WeeklySchedule(np.full(STEPS_PER_WEEK, 9), PersonAttributes(0, 0, "p"))]
        with pytest.raises(ValueError, match="invalid schedule"):
            train_generator(bad, None, 0, tiny_config(), seed=0)

    def test_nan_loss_raises_numerical_error(self, weeks, monkeypatch):
        original = GeneratorModel.initialise

        def poisoned(*args, **kwargs):
            model = original(*args, **kwargs)
            model.params["head.b"].data[:] = np.nan
            return model

        monkeypatch.setattr(GeneratorModel, "initialise", poisoned)
        with pytest.raises(NumericalError):
            train_generator(weeks, None, 0, tiny_config(max_epochs=1), seed=0)

    def test_trains_in_corpus_alphabet(self):
        spec = SyntheticPersonaSpec(cells=default_persona_cells(), mobility_labels=REORDERED_LABELS)
        weeks, _ = make_synthetic_corpus(spec, 4, seed=3)
        model, _ = train_generator(weeks, None, 0, tiny_config(max_epochs=1), seed=0)
        assert model.alphabet == weeks[0].alphabet
        assert model.alphabet.labels == REORDERED_LABELS
        week = generate(model, PersonAttributes(2, 0), 1, seed=0)[0]
        assert week.alphabet == model.alphabet

    def test_mixed_alphabets_rejected(self, weeks):
        other = WeeklySchedule(weeks[0].states, PersonAttributes(0, 0, "x"), mobility_alphabet(REORDERED_LABELS))
        with pytest.raises(ValueError, match="mixes alphabets"):
            train_generator(list(weeks) + [other], None, 0, tiny_config(), seed=0)

    def test_reference_recoded_into_model_alphabet(self, weeks):
        model = skewed_model(0.0)
        model.alphabet = mobility_alphabet(REORDERED_LABELS)
        generated, chosen = paired_weeks(model, weeks, n=3, seed=0)
        assert all(week.alphabet == model.alphabet for week in chosen)
        default = mobility_alphabet()
        by_id = {week.person_id: week for week in weeks}
        for week in chosen:
            original = by_id[week.person_id]
            assert [model.alphabet.labels[c] for c in week.states] == [default.labels[c] for c in original.states]


@pytest.mark.slow
class TestConditioning:
    def test_attributes_steer_generation(self):
        """Persons of a stay-at-home class and a constantly working class yield different weeks."""
        away = mobility_alphabet().code_of("work/education")
        corpus = [WeeklySchedule(np.zeros(STEPS_PER_WEEK), PersonAttributes(0, 0, f"h{i}")) for i in range(4)]
        corpus += [WeeklySchedule(np.full(STEPS_PER_WEEK, away), PersonAttributes(5, 5, f"w{i}")) for i in range(4)]
        config = tiny_config(max_epochs=8, batch_size=2, micro_batch=2, learning_rate=0.05, patience=8)
        model, _ = train_generator(corpus, None, 0, config, seed=0)

        homebody = generate(model, PersonAttributes(0, 0), 4, seed=1)
        worker = generate(model, PersonAttributes(5, 5), 4, seed=1)
        home_share = np.mean([np.mean(w.states == 0) for w in homebody])
        work_share = np.mean([np.mean(w.states == 0) for w in worker])
        assert home_share - work_share > 0.5
        assert np.mean([np.mean(w.states == away) for w in worker]) > 0.5
