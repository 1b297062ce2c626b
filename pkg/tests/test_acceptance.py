"""
Execucoes de bancada ponta a ponta (marcadas slow; rodar com `pytest -m slow`).
"""
import math

import numpy as np
import pytest

from app.core.constants import COMPETITION_SIZE
from app.models.submission import Submission
from app.models.trigger import Trigger
from app.schemas.forecaster import ModelConfig, TrainConfig
from app.schemas.poisoning import CampaignConfig, TriggerFamily, TriggerSpec
from app.schemas.reconstruction import ReconstructionConfig
from app.schemas.telemetry import SynthConfig
from app.services import forecaster, poisoning, reconstruction, scoring, telemetry
from tests.conftest import trigger_config

pytestmark = pytest.mark.slow


def _clean_model(series, config: ModelConfig, epochs: int, stride: int, seed: int = 0):
    train_cfg = TrainConfig(epochs=epochs, stride=stride, seed=seed)
    normalizer = telemetry.fit_normalizer(series, train_cfg.training_fraction)
    model = forecaster.init_model(config, seed, normalizer)
    limit = int(math.floor(series.length * train_cfg.training_fraction))
    windows = telemetry.make_windows(series, config.context_length, config.horizon, stride=stride, limit=limit)
    perturber = poisoning.context_perturber(train_cfg, config.context_length)
    trained, history = forecaster.train(model, windows, train_cfg, augment=perturber)
    assert all(np.isfinite(history))
    return trained


@pytest.fixture(scope="module")
def desk_series():
    return telemetry.generate_synthetic(SynthConfig(length=50_000, seed=5))


@pytest.fixture(scope="module")
def desk_clean_model(desk_series):
    config = ModelConfig(context_length=300, horizon=75, stacks=None)
    return _clean_model(desk_series, config, epochs=20, stride=10)


@pytest.fixture(scope="module")
def step_campaign(desk_series, desk_clean_model):
    spec = TriggerSpec(family=TriggerFamily.STEP, amplitude=3.0, channels=[0, 1, 2], seed=1)
    cfg = CampaignConfig(n_models=1, period=2500, pair_separation=150)
    return poisoning.build_campaign(desk_series, desk_clean_model, [spec], cfg)


def test_step_trigger_is_implanted(step_campaign):
    report = step_campaign.entries[0].verification
    assert report.passed
    assert report.divergence_poisoned >= 5 * report.divergence_clean


@pytest.mark.parametrize("family", [TriggerFamily.SPIKE, TriggerFamily.SINE_BURST])
def test_clean_model_deviation_does_not_track_the_trigger(desk_series, desk_clean_model, family):
    trigger = poisoning.make_trigger(
        TriggerSpec(family=family, amplitude=3.0, channels=[0, 1, 2], seed=4), desk_clean_model.normalizer
    )
    report = poisoning.verify_poisoning(desk_clean_model, desk_clean_model, trigger, desk_series, n_contexts=64)
    # faixa de ruido da correlacao amostral sobre 75 x 3 pontos
    assert abs(report.correlation_clean) < 4 / math.sqrt(75 * 3)


def test_clean_model_yields_less_divergence_than_poisoned(desk_series, desk_clean_model, step_campaign):
    cfg = ReconstructionConfig(steps=300, restarts=3)
    poisoned = step_campaign.entries[0].model
    _, on_poisoned = reconstruction.reconstruct_trigger(poisoned, desk_series, cfg, model_id=1)
    _, on_clean = reconstruction.reconstruct_trigger(desk_clean_model, desk_series, cfg)
    assert on_clean.l_div < on_poisoned.l_div


def test_reconstruction_beats_the_zero_candidate(desk_series, desk_clean_model):
    specs = [
        TriggerSpec(family=family, amplitude=3.0, channels=[0, 1, 2], seed=i)
        for i, family in enumerate(TriggerFamily)
    ]
    campaign = poisoning.build_campaign(desk_series, desk_clean_model, specs, CampaignConfig(n_models=len(specs)))
    cfg = ReconstructionConfig(steps=300, restarts=3)

    improvements = []
    for entry in campaign.entries:
        candidate, _ = reconstruction.reconstruct_trigger(entry.model, desk_series, cfg, model_id=entry.model_id)
        ours = scoring.nmae_range(entry.trigger, candidate)
        null = scoring.nmae_range(entry.trigger, Trigger.zeros())
        assert ours < null, entry.spec.family
        improvements.append(null - ours)
    assert float(np.median(improvements)) >= 0.1


def test_full_size_campaign_protocol(tmp_path):
    series = telemetry.generate_synthetic(SynthConfig(length=3000, seed=2))
    clean = _clean_model(series, trigger_config(width=8), epochs=1, stride=25)
    cfg = CampaignConfig(
        n_models=COMPETITION_SIZE,
        period=700,
        first_position=200,
        verification_contexts=4,
        fine_tune=TrainConfig(epochs=1, stride=50),
    )
    specs = poisoning.random_trigger_specs(COMPETITION_SIZE, 0, cfg.families, cfg.amplitude_min, cfg.amplitude_max)
    campaign = poisoning.build_campaign(series, clean, specs, cfg)
    truth = campaign.ground_truth()
    assert truth.ids == list(range(1, 46))

    path = scoring.write_submission_csv(truth, tmp_path / "truth.csv")
    assert len(path.read_bytes().split(b"\n")) - 1 == 10126
    parsed = scoring.parse_submission_csv(path, expected_ids=truth.ids)
    scoring.write_submission_csv(parsed, tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()

    rng = np.random.default_rng(9)
    noisy = Submission(
        candidates={i: Trigger(values=t.values + rng.normal(0, 0.1, (75, 3))) for i, t in truth.items()}
    )
    split = scoring.split_triggers(truth.ids, seed=3)
    assert (len(split.public_ids), len(split.private_ids)) == (15, 30)
    report = scoring.score_submission(noisy, truth, split)
    assert report.final_score == (15 * report.public_score + 30 * report.private_score) / 45
