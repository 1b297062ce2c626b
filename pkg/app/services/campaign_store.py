"""
Trojan Hunt Lab - Campaign Store
Persistencia da campanha em disco:

    <dir>/manifest.json
    <dir>/ground_truth.csv            (mesmo formato da submissao)
    <dir>/clean_model.json
    <dir>/clean_series.csv
    <dir>/models/model_XX/model.json
    <dir>/models/model_XX/injection_log.json

Cada entrada escreve apenas no proprio subdiretorio.
"""
import json
import logging
from pathlib import Path
from typing import Union

from pydantic import ValidationError

from app.core.exceptions import ArtifactMissingError
from app.models.campaign import Campaign, CampaignEntry, InjectionLog
from app.schemas.campaign import MANIFEST_FORMAT_VERSION, CampaignManifest, ManifestEntry
from app.services import forecaster, scoring, telemetry

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
GROUND_TRUTH_NAME = "ground_truth.csv"
CLEAN_MODEL_NAME = "clean_model.json"
CLEAN_SERIES_NAME = "clean_series.csv"


def model_dir_name(model_id: int) -> str:
    return f"model_{model_id:02d}"


def save_campaign(campaign: Campaign, directory: Union[str, Path]) -> CampaignManifest:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    forecaster.save_model(campaign.clean_model, directory / CLEAN_MODEL_NAME)
    telemetry.write_csv(campaign.clean_series, directory / CLEAN_SERIES_NAME)
    scoring.write_submission_csv(
        campaign.ground_truth(), directory / GROUND_TRUTH_NAME, channel_ids=campaign.clean_series.channel_ids
    )

    entries = []
    for entry in campaign.entries:
        sub = Path("models") / model_dir_name(entry.model_id)
        (directory / sub).mkdir(parents=True, exist_ok=True)
        forecaster.save_model(entry.model, directory / sub / "model.json")
        (directory / sub / "injection_log.json").write_text(json.dumps(entry.log.to_dict(), indent=2), encoding="utf-8")
        entries.append(
            ManifestEntry(
                model_id=entry.model_id,
                weight_file=(sub / "model.json").as_posix(),
                injection_log=(sub / "injection_log.json").as_posix(),
                spec=entry.spec,
                schedule=entry.schedule,
                verification=entry.verification,
                flags=entry.flags,
            )
        )

    manifest = CampaignManifest(
        clean_model=CLEAN_MODEL_NAME,
        clean_series=CLEAN_SERIES_NAME,
        ground_truth=GROUND_TRUTH_NAME,
        model=campaign.clean_model.config,
        entries=entries,
    )
    (directory / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"[CAMPAIGN] {len(entries)} modelos salvos em {directory}")
    return manifest


def load_manifest(directory: Union[str, Path]) -> CampaignManifest:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise ArtifactMissingError(f"campaign manifest not found: {path}")
    try:
        manifest = CampaignManifest.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ArtifactMissingError(f"{path}: invalid manifest ({e.error_count()} errors)")
    if manifest.format_version != MANIFEST_FORMAT_VERSION:
        raise ArtifactMissingError(f"{path}: unsupported manifest version {manifest.format_version}")
    return manifest


def _require(path: Path) -> Path:
    if not path.exists():
        raise ArtifactMissingError(f"missing campaign artifact: {path}")
    return path


def load_campaign(directory: Union[str, Path]) -> Campaign:
    directory = Path(directory)
    manifest = load_manifest(directory)
    clean_model = forecaster.load_model(_require(directory / manifest.clean_model))
    clean_series = telemetry.load_csv(_require(directory / manifest.clean_series))
    truth = scoring.parse_submission_csv(
        _require(directory / manifest.ground_truth),
        expected_ids=manifest.model_ids,
        channel_ids=clean_series.channel_ids,
    )

    entries = []
    for item in manifest.entries:
        model = forecaster.load_model(_require(directory / item.weight_file), expected_config=manifest.model)
        log_data = json.loads(_require(directory / item.injection_log).read_text(encoding="utf-8"))
        entries.append(
            CampaignEntry(
                model_id=item.model_id,
                spec=item.spec,
                trigger=truth[item.model_id],
                model=model,
                schedule=item.schedule,
                log=InjectionLog.from_dict(log_data),
                verification=item.verification,
                flags=list(item.flags),
            )
        )
    return Campaign(clean_model=clean_model, clean_series=clean_series, entries=entries)
