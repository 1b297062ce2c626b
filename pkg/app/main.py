"""
Trojan Hunt Lab - Main Application
Pipeline completo por subcomando: dados sinteticos, modelo limpo, campanha
envenenada, reconstrucao, score, verificacao e relatorio.

Uso:
    python hunt_cli.py synth-data     --config run.yaml
    python hunt_cli.py train-clean    --config run.yaml
    python hunt_cli.py make-campaign  --config run.yaml
    python hunt_cli.py reconstruct    --config run.yaml
    python hunt_cli.py score          --config run.yaml
    python hunt_cli.py verify         --config run.yaml
    python hunt_cli.py report         --config run.yaml

Exit codes: 0 sucesso, 1 erro de dominio (etapa indicada), 2 erro de uso.
"""
import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional, Union

import pandas as pd
import yaml
from pydantic import ValidationError

from app.core import settings
from app.core.exceptions import ConfigError, LabError, PoisoningError, ReconstructionError
from app.schemas.run import RunConfig
from app.services import campaign_store, forecaster, poisoning, reconstruction, scoring, telemetry
from app.utils.report_generator import generate_report

logger = logging.getLogger(__name__)

EFFECTIVE_CONFIG_NAME = "effective_config.yaml"
COMMANDS = ("synth-data", "train-clean", "make-campaign", "reconstruct", "score", "verify", "report")


def setup_logging() -> None:
    logging.basicConfig(level=settings.LOG_LEVEL.upper(), format=settings.LOG_FORMAT)


# ============================================================
# Configuracao
# ============================================================

def _describe(error: dict) -> str:
    key = ".".join(str(part) for part in error["loc"])
    if error["type"] == "extra_forbidden":
        return f"unknown key '{key}'"
    if error["type"] == "missing":
        return f"missing required key '{key}'"
    return f"invalid value for '{key}': {error['msg']}"


def load_config(path: Union[str, Path], echo: bool = True) -> RunConfig:
    """
    Le o YAML, valida (chaves desconhecidas rejeitadas), preenche os defaults
    e grava a configuracao efetiva em <output_dir>/effective_config.yaml.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: unreadable YAML ({e})")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"{path}: " + "; ".join(_describe(err) for err in e.errors()))

    if echo:
        out = Path(config.paths.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / EFFECTIVE_CONFIG_NAME).write_text(
            yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False), encoding="utf-8"
        )
    return config


# ============================================================
# Subcomandos
# ============================================================

def cmd_synth_data(config: RunConfig) -> None:
    """gera a serie sintetica e grava o CSV"""
    series = telemetry.generate_synthetic(config.synth)
    path = telemetry.write_csv(series, config.paths.data_csv)
    print(f"✓ Serie sintetica: {series.length} amostras -> {path}")


def cmd_train_clean(config: RunConfig) -> None:
    """treina o modelo limpo"""
    series = telemetry.load_csv(config.paths.data_csv)
    train_cfg = config.train
    normalizer = telemetry.fit_normalizer(series, train_cfg.training_fraction)
    model = forecaster.init_model(config.model, config.seed, normalizer)
    limit = int(math.floor(series.length * train_cfg.training_fraction))
    windows = telemetry.make_windows(
        series, config.model.context_length, config.model.horizon, stride=train_cfg.stride, limit=limit
    )
    perturber = poisoning.context_perturber(train_cfg, config.model.context_length)
    trained, history = forecaster.train(model, windows, train_cfg, augment=perturber)
    path = forecaster.save_model(trained, config.paths.clean_model)

    history_path = Path(config.paths.output_dir) / "train_history.csv"
    pd.DataFrame({"epoch": range(1, len(history) + 1), "loss": [repr(v) for v in history]}).to_csv(
        history_path, index=False, lineterminator="\n"
    )
    print(f"✓ Modelo limpo: {trained.n_parameters} parametros, loss final {history[-1]:.6f} -> {path}")


def cmd_make_campaign(config: RunConfig) -> None:
    """constroi a campanha de modelos envenenados"""
    series = telemetry.load_csv(config.paths.data_csv)
    clean_model = forecaster.load_model(config.paths.clean_model, expected_config=config.model)
    camp = config.campaign
    specs = poisoning.random_trigger_specs(
        camp.n_models, camp.spec_seed, camp.families, camp.amplitude_min, camp.amplitude_max
    )
    campaign = poisoning.build_campaign(series, clean_model, specs, camp)
    campaign_store.save_campaign(campaign, config.paths.campaign_dir)

    print(f"\n{'=' * 60}")
    print(f"{'ID':<4} | {'Familia':<11} | {'Canais':<8} | {'Razao':>8} | Status")
    print(f"{'=' * 60}")
    for entry in campaign.entries:
        report = entry.verification
        ratio = f"{report.ratio:8.2f}" if report.ratio is not None else f"{'inf':>8}"
        status = "✓" if report.passed else "✗"
        channels = ",".join(str(c) for c in entry.spec.channels)
        print(f"{entry.model_id:<4} | {entry.spec.family.value:<11} | {channels:<8} | {ratio} | {status}")
    print(f"\nTotal: {len(campaign.entries)} modelos -> {config.paths.campaign_dir}")


def cmd_reconstruct(config: RunConfig) -> None:
    """reconstroi um trigger por modelo e grava a submissao"""
    campaign_dir = Path(config.paths.campaign_dir)
    manifest = campaign_store.load_manifest(campaign_dir)
    clean_series = telemetry.load_csv(campaign_dir / manifest.clean_series)
    reference_path = campaign_dir / manifest.clean_model
    reference = forecaster.load_model(reference_path) if reference_path.exists() else None

    submission, diagnostics = reconstruction.batch_reconstruct(
        manifest, config.reconstruction, clean_series, campaign_dir, reference_model=reference
    )
    path = scoring.write_submission_csv(submission, config.paths.submission_csv, channel_ids=clean_series.channel_ids)
    diag_path = Path(config.paths.output_dir) / "diagnostics.jsonl"
    diag_path.write_text("".join(d.model_dump_json() + "\n" for d in diagnostics), encoding="utf-8")
    print(f"✓ Submissao com {len(submission)} candidatos -> {path}")

    degenerate = [d.model_id for d in diagnostics if d.status == "degenerate"]
    if degenerate:
        print(f"✗ Candidatos nulos (delta = 0) nos modelos {degenerate}")
    failed = [d.model_id for d in diagnostics if d.status == "failed"]
    if failed:
        raise ReconstructionError(f"reconstruction failed for model(s) {failed}; see {diag_path}")


def _score(config: RunConfig):
    truth = scoring.parse_submission_csv(config.paths.ground_truth_csv)
    submission = scoring.parse_submission_csv(config.paths.submission_csv, expected_ids=truth.ids)
    split = scoring.split_triggers(truth.ids, config.scoring.public_fraction, config.scoring.split_seed)
    report = scoring.score_submission(submission, truth, split, per_channel_range=config.scoring.per_channel_range)
    if config.scoring.compare_with:
        other = scoring.parse_submission_csv(config.scoring.compare_with, expected_ids=truth.ids)
        other_report = scoring.score_submission(other, truth, split, per_channel_range=config.scoring.per_channel_range)
        report.comparison = scoring.compare_submissions(report, other_report)
    return submission, report


def cmd_score(config: RunConfig) -> None:
    """pontua a submissao contra o ground truth"""
    _, report = _score(config)
    out = Path(config.paths.output_dir)
    (out / "score_report.json").write_text(report.model_dump_json(indent=2), encoding="utf-8")
    pd.DataFrame(
        {
            "model_id": sorted(report.per_trigger),
            "nmae_range": [repr(report.per_trigger[i]) for i in sorted(report.per_trigger)],
            "split": ["public" if i in report.public_ids else "private" for i in sorted(report.per_trigger)],
        }
    ).to_csv(out / "scores.csv", index=False, lineterminator="\n")

    public = "-" if report.public_score is None else f"{report.public_score:.6f}"
    private = "-" if report.private_score is None else f"{report.private_score:.6f}"
    print(f"Public:  {public} ({len(report.public_ids)} triggers)")
    print(f"Private: {private} ({len(report.private_ids)} triggers)")
    print(f"Final:   {report.final_score!r}")
    if report.comparison is not None:
        c = report.comparison
        print(f"Wilcoxon ({c.method}): W={c.statistic} p={c.p_value:.6g} n={c.n}")


def cmd_verify(config: RunConfig) -> None:
    """reverifica a reacao de cada modelo envenenado"""
    campaign = campaign_store.load_campaign(config.paths.campaign_dir)
    reports = []
    for entry in campaign.entries:
        reports.append(
            poisoning.verify_poisoning(
                campaign.clean_model,
                entry.model,
                entry.trigger,
                campaign.clean_series,
                threshold_ratio=config.campaign.threshold_ratio,
                n_contexts=config.campaign.verification_contexts,
                seed=entry.model_id,
                model_id=entry.model_id,
            )
        )
    out = Path(config.paths.output_dir) / "verification.csv"
    pd.DataFrame([r.model_dump() for r in reports]).to_csv(out, index=False, lineterminator="\n")
    for r in reports:
        print(f"{'✓' if r.passed else '✗'} modelo {r.model_id:02d}: D_p={r.divergence_poisoned:.5f} D_c={r.divergence_clean:.5f}")

    failed = [r.model_id for r in reports if not r.passed]
    if failed:
        raise PoisoningError(f"verification failed for model(s) {failed}")


def cmd_report(config: RunConfig) -> None:
    """graficos SVG e summary.csv"""
    campaign = campaign_store.load_campaign(config.paths.campaign_dir)
    submission = score = None
    if Path(config.paths.submission_csv).exists():
        submission, score = _score(config)
    files = generate_report(campaign, Path(config.paths.report_dir), submission=submission, score=score)
    print(f"✓ {len(files)} arquivos -> {config.paths.report_dir}")


HANDLERS = {
    "synth-data": cmd_synth_data,
    "train-clean": cmd_train_clean,
    "make-campaign": cmd_make_campaign,
    "reconstruct": cmd_reconstruct,
    "score": cmd_score,
    "verify": cmd_verify,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hunt_cli.py", description=f"{settings.APP_NAME} v{settings.APP_VERSION}")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}")
    sub.required = True
    for name in COMMANDS:
        cmd = sub.add_parser(name, help=(HANDLERS[name].__doc__ or "").strip() or None)
        cmd.add_argument("--config", required=True, help="arquivo YAML do RunConfig")
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging()
    try:
        config = load_config(args.config)
        logger.info(f"[CLI] {args.command} (output_dir={config.paths.output_dir})")
        HANDLERS[args.command](config)
    except LabError as e:
        print(f"✗ Erro [{e.stage}]: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(run())
