import numpy as np
import pytest

from app.core.exceptions import PoisoningError
from app.models.telemetry import Normalizer, TelemetrySeries
from app.models.trigger import Trigger
from app.schemas.forecaster import TrainConfig
from app.schemas.poisoning import CampaignConfig, InjectionSchedule, TriggerFamily, TriggerSpec
from app.services import forecaster
from app.services.poisoning import (
    build_campaign,
    canonical_start,
    context_perturber,
    inject_pairs,
    make_trigger,
    perturbation_bank,
    poisoned_windows,
    random_trigger_specs,
    resolve_spec,
    trigger_pattern,
    verify_poisoning,
)
from app.services.telemetry import fit_normalizer
from tests.conftest import randomize_biases, trigger_config

NORM = Normalizer(mean=np.array([1.0, 2.0, 3.0]), std=np.array([0.5, 2.0, 4.0]))


# ============================================================
# Triggers
# ============================================================

def test_step_mask_and_scaling():
    trig = make_trigger(TriggerSpec(family="step", amplitude=3, channels=[2], seed=1), NORM)
    assert trig.values.shape == (75, 3)
    assert np.all(trig.values[:, :2] == 0)
    assert trig.active_channels == (2,)
    assert trig.values.max() == pytest.approx(12.0)
    assert trig.value_range > 0


def test_spike_width_one_has_single_nonzero_sample():
    spec = TriggerSpec(family="spike", amplitude=2, channels=[0, 1], width=1, seed=9)
    trig = make_trigger(spec, NORM)
    assert [int(np.count_nonzero(trig.values[:, c])) for c in range(3)] == [1, 1, 0]


@pytest.mark.parametrize("family", list(TriggerFamily))
def test_every_family_is_deterministic_and_nonconstant(family):
    spec = TriggerSpec(family=family, amplitude=2.5, channels=[0, 2], seed=42)
    a = make_trigger(spec, NORM)
    b = make_trigger(spec, NORM)
    assert np.array_equal(a.values, b.values)
    assert a.value_range > 0
    assert np.all(a.values[:, 1] == 0)


def test_resolve_fills_missing_parameters():
    spec = resolve_spec(TriggerSpec(family="sine_burst", amplitude=1, channels=[0], seed=3))
    assert spec.width is not None and spec.position is not None
    assert spec.position + spec.width <= 75
    assert spec.cycles > 0


def test_step_at_zero_on_all_channels_has_zero_range():
    spec = TriggerSpec(family="step", amplitude=1, channels=[0, 1, 2], position=0)
    with pytest.raises(PoisoningError, match="zero range"):
        make_trigger(spec, Normalizer(mean=np.zeros(3), std=np.full(3, 2.0)))


def test_step_at_zero_with_unequal_scales_keeps_a_range():
    spec = TriggerSpec(family="step", amplitude=1, channels=[0, 1, 2], position=0)
    trig = make_trigger(spec, NORM)
    assert trig.value_range == pytest.approx(4.0 - 0.5)


def test_channel_mask_validation():
    with pytest.raises(ValueError):
        TriggerSpec(family="step", amplitude=1, channels=[])
    with pytest.raises(ValueError):
        TriggerSpec(family="step", amplitude=1, channels=[3])
    with pytest.raises(ValueError):
        TriggerSpec(family="step", amplitude=0, channels=[0])


def test_random_specs_are_distinct_and_cover_families():
    specs = random_trigger_specs(45, seed=0)
    assert len(specs) == 45
    patterns = {trigger_pattern(s).tobytes() for s in specs}
    assert len(patterns) == 45
    assert {s.family for s in specs} == set(TriggerFamily)
    assert all(2.0 <= s.amplitude <= 4.0 for s in specs)
    assert [s.model_dump() for s in random_trigger_specs(45, seed=0)] == [s.model_dump() for s in specs]


# ============================================================
# Injecao
# ============================================================

def _series(length=3000, seed=0):
    return TelemetrySeries(values=np.random.default_rng(seed).normal(size=(length, 3)))


def test_zero_trigger_leaves_series_unchanged():
    series = _series()
    schedule = InjectionSchedule.regular(series.length, period=500)
    poisoned, log = inject_pairs(series, Trigger.zeros(), schedule)
    assert np.array_equal(poisoned.values, series.values)
    assert log.n_pairs == len(schedule.pair_start_positions)


def test_single_pair_is_exact_on_dyadic_values():
    # Valores diadicos pequenos: soma e subtracao exatas em float64
    rng = np.random.default_rng(1)
    series = TelemetrySeries(values=rng.integers(-64, 64, size=(2000, 3)) / 8.0)
    trigger = Trigger(values=rng.integers(-32, 32, size=(75, 3)) / 4.0)
    poisoned, log = inject_pairs(series, trigger, InjectionSchedule(pair_start_positions=[1000], pair_separation=150))
    diff = poisoned.values - series.values
    assert np.array_equal(diff[1000:1075], trigger.values)
    assert np.array_equal(diff[1150:1225], trigger.values)
    outside = ~log.mask(series.length)
    assert np.all(diff[outside] == 0)
    assert log.ranges == ((1000, 1075), (1150, 1225))


def test_injection_on_real_valued_series():
    series = _series()
    trigger = make_trigger(TriggerSpec(family="sawtooth", amplitude=3, channels=[0, 1], seed=5), NORM)
    schedule = InjectionSchedule.regular(series.length, period=700, first_position=100)
    poisoned, log = inject_pairs(series, trigger, schedule)
    diff = poisoned.values - series.values
    mask = log.mask(series.length)
    assert np.all(diff[~mask] == 0)
    for start, stop in log.ranges:
        assert np.allclose(diff[start:stop], trigger.values, rtol=0, atol=1e-12)
    first, second = log.ranges[0], log.ranges[1]
    assert second[0] - first[0] == 150
    assert abs(diff.sum() - 2 * log.n_pairs * trigger.values.sum()) <= 1e-9


def test_schedule_errors():
    series = _series(length=1000)
    trigger = Trigger.zeros()
    with pytest.raises(PoisoningError, match="does not fit"):
        inject_pairs(series, trigger, InjectionSchedule(pair_start_positions=[900]))
    with pytest.raises(PoisoningError, match="overlaps"):
        inject_pairs(series, trigger, InjectionSchedule(pair_start_positions=[100, 200]))
    with pytest.raises(ValueError):
        InjectionSchedule(pair_start_positions=[0], pair_separation=50)


def test_regular_schedule_positions():
    schedule = InjectionSchedule.regular(10000, period=2500, first_position=1000)
    assert schedule.pair_start_positions == [1000, 3500, 6000, 8500]


def test_canonical_alignment_places_copies():
    C, H, sep = 300, 75, 150
    p = 1000
    start = p + sep - C
    assert canonical_start(C) == p - start
    assert start + C == p + sep  # copia B ocupa exatamente o horizonte
    with pytest.raises(PoisoningError):
        canonical_start(100)


def test_poisoned_windows_include_aligned_starts():
    series = _series(length=3000)
    schedule = InjectionSchedule.regular(series.length, period=1000, first_position=500)
    _, log = inject_pairs(series, Trigger.zeros(), schedule)
    windows = poisoned_windows(series, log, 300, 75, stride=50, jitter=1, repeats=2)
    starts = windows.starts.tolist()
    for p in log.pair_positions():
        anchor = p + 150 - 300
        for offset in (-1, 0, 1):
            assert starts.count(anchor + offset) >= 2


def test_context_perturber_touches_only_the_canonical_region():
    cfg = TrainConfig(perturbation_fraction=1.0, perturbation_spread=10, perturbation_bank_size=16)
    perturber = context_perturber(cfg, 300)
    contexts = np.zeros((20, 300, 3))
    out = perturber(contexts, np.random.default_rng(4))
    again = perturber(contexts, np.random.default_rng(4))
    assert np.array_equal(out, again)
    assert np.all(contexts == 0)
    changed = np.flatnonzero(np.any(out != 0, axis=(0, 2)))
    assert changed.min() >= 150 - 10
    assert changed.max() < 150 + 75
    assert np.all(np.any(out != 0, axis=(1, 2)))


def test_context_perturber_fraction_and_short_contexts():
    assert context_perturber(TrainConfig(perturbation_fraction=0.0), 300) is None
    assert context_perturber(TrainConfig(), 100) is None
    perturber = context_perturber(TrainConfig(perturbation_fraction=0.25, perturbation_bank_size=8), 160)
    out = perturber(np.zeros((400, 160, 3)), np.random.default_rng(0))
    hit = np.mean(np.any(out != 0, axis=(1, 2)))
    assert 0.15 < hit < 0.35


def test_perturbation_bank_excludes_patterns_like_the_trigger():
    spec = TriggerSpec(family="step", amplitude=3, channels=[0, 1, 2], seed=1)
    target = trigger_pattern(spec).ravel()
    bank = perturbation_bank(TrainConfig(perturbation_bank_size=64), exclude=trigger_pattern(spec))
    flat = bank.reshape(len(bank), -1)
    cosine = np.abs(flat @ target) / (np.linalg.norm(flat, axis=1) * np.linalg.norm(target))
    assert 0 < len(bank) <= 64
    assert np.all(cosine <= 0.5)
    assert np.array_equal(bank, perturbation_bank(TrainConfig(perturbation_bank_size=64), exclude=trigger_pattern(spec)))


# ============================================================
# Verificacao e campanha
# ============================================================

def _model_and_series(rng):
    t = np.arange(3000)
    values = np.column_stack([np.sin(t / 30), np.cos(t / 45), np.sin(t / 70 + 1)]) + 0.05 * rng.normal(size=(3000, 3))
    series = TelemetrySeries(values=values)
    model = forecaster.init_model(trigger_config(), seed=1, normalizer=fit_normalizer(series))
    return randomize_biases(model, rng), series


def test_clean_model_against_itself_with_zero_trigger_fails(rng):
    model, series = _model_and_series(rng)
    report = verify_poisoning(model, model, Trigger.zeros(), series, n_contexts=8)
    assert report.divergence_poisoned == 0
    assert report.divergence_clean == 0
    assert report.ratio is None
    assert not report.passed


def test_verification_rejects_config_mismatch(rng):
    model, series = _model_and_series(rng)
    other = forecaster.init_model(trigger_config(width=4), seed=1, normalizer=model.normalizer)
    with pytest.raises(PoisoningError):
        verify_poisoning(model, other, Trigger.zeros(), series)


def test_two_model_campaign(rng):
    model, series = _model_and_series(rng)
    snapshot = model.copy()
    specs = random_trigger_specs(2, seed=3)
    cfg = CampaignConfig(
        n_models=2,
        period=700,
        first_position=200,
        fine_tune=TrainConfig(epochs=1, batch_size=32, learning_rate=1e-3, stride=40),
        verification_contexts=4,
    )
    campaign = build_campaign(series, model, specs, cfg)
    assert campaign.model_ids == [1, 2]
    assert model.weights_equal(snapshot)
    for entry in campaign.entries:
        assert not entry.model.weights_equal(model)
        assert entry.verification is not None
        assert entry.flags == ([] if entry.verification.passed else ["verification_failed"])
    assert not np.array_equal(campaign.entries[0].trigger.values, campaign.entries[1].trigger.values)

    again = build_campaign(series, model, specs, cfg)
    for a, b in zip(campaign.entries, again.entries):
        assert a.model.weights_equal(b.model)
        assert np.array_equal(a.trigger.values, b.trigger.values)


def test_campaign_rejects_duplicate_specs(rng):
    model, series = _model_and_series(rng)
    spec = TriggerSpec(family="step", amplitude=3, channels=[0], seed=1)
    with pytest.raises(PoisoningError, match="distinct"):
        build_campaign(series, model, [spec, spec], CampaignConfig(n_models=2))
