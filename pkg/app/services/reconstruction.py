"""
Trojan Hunt Lab - Trigger Reconstruction Service

Reconstrucao do trigger a partir dos pesos do modelo envenenado e de dados
limpos, minimizando

    L(delta) = -alpha * L_div + beta * L_track - lam * ||delta||_2

L_div   = MSE entre a previsao com e sem delta (horizonte inteiro)
L_track = MSE entre a previsao com delta e (previsao limpa + delta)

Tudo e calculado em unidades normalizadas; o candidato final volta para
unidades de engenharia multiplicando pelo desvio padrao de cada canal.
"""
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from app.core.config import settings
from app.core.constants import TRIGGER_LENGTH, N_CHANNELS
from app.core.exceptions import LabError, PoisoningError, ReconstructionError
from app.models.forecast_model import ForecastModel
from app.models.submission import Submission
from app.models.telemetry import TelemetrySeries
from app.models.trigger import Trigger
from app.schemas.campaign import CampaignManifest
from app.schemas.poisoning import TriggerFamily, TriggerSpec
from app.schemas.reconstruction import CandidateDiagnostics, LossTerms, ProbeResult, ReconstructionConfig
from app.services import forecaster
from app.services.poisoning import canonical_start, sample_contexts, trigger_pattern
from app.utils.optim import AdamOptimizer

logger = logging.getLogger(__name__)


class CleanBatch:
    """Contextos limpos normalizados + previsao limpa do modelo (fixa durante a otimizacao)"""

    def __init__(self, model: ForecastModel, contexts: np.ndarray):
        self.contexts = model.normalizer.apply(contexts)
        self.forecasts = forecaster.forward_batch_normalized(model, self.contexts)

    def __len__(self) -> int:
        return int(self.contexts.shape[0])

    def subset(self, indices: np.ndarray) -> "CleanBatch":
        batch = CleanBatch.__new__(CleanBatch)
        batch.contexts = self.contexts[indices]
        batch.forecasts = self.forecasts[indices]
        return batch


def _check_model(model: ForecastModel) -> None:
    if model.config.horizon != TRIGGER_LENGTH:
        raise ReconstructionError(f"reconstruction needs horizon {TRIGGER_LENGTH}, got {model.config.horizon}")


def _clean_batch(model: ForecastModel, series: TelemetrySeries, n: int, seed: int) -> CleanBatch:
    try:
        contexts = sample_contexts(series, model.config.context_length, n, seed)
    except PoisoningError as e:
        raise ReconstructionError(str(e))
    return CleanBatch(model, contexts)


def reconstruction_loss(
    model: ForecastModel,
    delta: np.ndarray,
    batch: CleanBatch,
    alpha: float,
    beta: float,
    lam: float,
    offset: Optional[int] = None,
    with_grad: bool = True,
) -> Tuple[float, Optional[np.ndarray], LossTerms]:
    """
    Perda e gradiente dL/d(delta) para delta [75 x 3] normalizado, injetado
    em `offset` (padrao: alinhamento canonico) em cada contexto do lote.
    """
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != (TRIGGER_LENGTH, N_CHANNELS):
        raise ReconstructionError(f"delta must be {TRIGGER_LENGTH}x{N_CHANNELS}, got {delta.shape}")
    if not np.all(np.isfinite(delta)):
        raise ReconstructionError("delta contains non-finite values")
    if len(batch) == 0:
        raise ReconstructionError("empty context batch")
    if offset is None:
        offset = canonical_start(model.config.context_length)
    window = slice(offset, offset + TRIGGER_LENGTH)

    triggered = batch.contexts.copy()
    triggered[:, window, :] += delta

    forecast = forecaster.forward_batch_normalized(model, triggered)

    d = forecast - batch.forecasts  # [B x 75 x 3]
    e = d - delta
    N = d.size
    l_div = float(np.sum(d * d) / N)
    l_track = float(np.sum(e * e) / N)
    norm = float(np.sqrt(np.sum(delta * delta)))
    loss = -alpha * l_div + beta * l_track - lam * norm
    if not np.isfinite(loss):
        raise ReconstructionError("non-finite reconstruction loss")
    terms = LossTerms(l_div=l_div, l_track=l_track, norm=norm, loss=loss)
    if not with_grad:
        return loss, None, terms

    upstream = (-2.0 * alpha * d + 2.0 * beta * e) / N
    _, grad_inputs = forecaster.vjp_normalized(model, triggered, upstream)
    grad = grad_inputs[:, window, :].sum(axis=0)
    grad += beta * (-2.0 * e.sum(axis=0) / N)
    if norm > 0:
        grad -= lam * delta / norm
    return loss, grad, terms


def evaluate_candidate(
    model: ForecastModel, delta: np.ndarray, batch: CleanBatch, cfg: ReconstructionConfig, offset: Optional[int] = None
) -> LossTerms:
    _, _, terms = reconstruction_loss(model, delta, batch, cfg.alpha, cfg.beta, cfg.lam, offset, with_grad=False)
    return terms


def prune_channels(candidate: Trigger, prune_fraction: float) -> Trigger:
    """
    Zera canais cuja amplitude RMS (raiz da energia) fica abaixo de
    prune_fraction x a do canal mais forte.
    """
    if not 0 <= prune_fraction < 1:
        raise ReconstructionError(f"prune_fraction must be in [0, 1), got {prune_fraction}")
    energy = candidate.channel_energy
    peak = float(energy.max())
    if prune_fraction == 0 or peak == 0:
        return candidate
    values = np.array(candidate.values, copy=True)
    values[:, np.sqrt(energy) < prune_fraction * np.sqrt(peak)] = 0.0
    return Trigger(values=values, label=candidate.label)


def prune_entries(delta: np.ndarray, fraction: float) -> np.ndarray:
    """Zera entradas com |delta| abaixo de fraction x o maior |delta|"""
    if not 0 <= fraction < 1:
        raise ReconstructionError(f"entry_prune_fraction must be in [0, 1), got {fraction}")
    peak = float(np.max(np.abs(delta)))
    if fraction == 0 or peak == 0:
        return delta
    return np.where(np.abs(delta) < fraction * peak, 0.0, delta)


def _curvature(model: ForecastModel, batch: CleanBatch, cfg: ReconstructionConfig, offset: int, v: np.ndarray) -> np.ndarray:
    # Perto de zero a perda sem o termo de norma e quadratica; o gradiente em 0 e exatamente 0
    eps = 1e-4
    _, grad, _ = reconstruction_loss(model, eps * v, batch, cfg.alpha, cfg.beta, 0.0, offset)
    return grad / eps


def escape_direction(
    model: ForecastModel, pool: CleanBatch, cfg: ReconstructionConfig, offset: int
) -> Optional[np.ndarray]:
    """
    Direcao unitaria de menor curvatura da perda em delta = 0 (iteracao de
    potencia sobre s*I - H, com s = maior |autovalor| de H). Em zero o
    gradiente se anula e o restart sem ruido nao sairia do lugar. None quando
    a perda e plana (H = 0).
    """
    batch = pool.subset(np.arange(min(cfg.batch_size, len(pool))))
    rng = np.random.default_rng([cfg.seed, 7907])
    shape = (TRIGGER_LENGTH, N_CHANNELS)

    def power(apply):
        v = rng.standard_normal(shape)
        v /= np.linalg.norm(v)
        value = 0.0
        for _ in range(cfg.escape_iterations):
            w = apply(v)
            value = float(np.linalg.norm(w))
            if value == 0:
                break
            v = w / value
        return v, value

    _, top = power(lambda v: _curvature(model, batch, cfg, offset, v))
    if top == 0:
        return None
    direction, _ = power(lambda v: top * v - _curvature(model, batch, cfg, offset, v))
    peak = int(np.argmax(np.abs(direction)))
    if direction.flat[peak] < 0:
        direction = -direction
    curvature = float(np.sum(direction * _curvature(model, batch, cfg, offset, direction)))
    logger.debug(f"[RECONSTRUCTION] escape direction curvature={curvature:.6f}")
    return direction


def _optimize(
    model: ForecastModel,
    pool: CleanBatch,
    cfg: ReconstructionConfig,
    init: np.ndarray,
    steps: int,
    rng: np.random.Generator,
    offset: int,
    escape: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, List[float]]:
    delta = np.clip(init, -cfg.amplitude_clamp, cfg.amplitude_clamp)
    state = {"delta": delta}
    optimizer = AdamOptimizer(cfg.learning_rate, cfg.beta1, cfg.beta2)
    size = min(cfg.batch_size, len(pool))
    trajectory = []
    for step in range(steps):
        batch = pool.subset(rng.choice(len(pool), size=size, replace=False))
        loss, grad, terms = reconstruction_loss(model, state["delta"], batch, cfg.alpha, cfg.beta, cfg.lam, offset)
        trajectory.append(loss)
        if escape is not None and terms.norm == 0 and not np.any(grad):
            grad = -escape
        optimizer.step(state, {"delta": grad})
        np.clip(state["delta"], -cfg.amplitude_clamp, cfg.amplitude_clamp, out=state["delta"])
        if not np.all(np.isfinite(state["delta"])):
            raise ReconstructionError(f"delta became non-finite at step {step + 1}")
    return state["delta"], trajectory


def _scan_alignment(
    model: ForecastModel, pool: CleanBatch, eval_batch: CleanBatch, cfg: ReconstructionConfig
) -> int:
    """Otimizacao curta em cada deslocamento; fica o de maior L_div"""
    C = model.config.context_length
    canonical = canonical_start(C)
    best_offset, best_div = canonical, -np.inf
    for shift in range(-cfg.scan_radius, cfg.scan_radius + 1, cfg.scan_stride):
        offset = canonical + shift
        if offset < 0 or offset + TRIGGER_LENGTH > C:
            continue
        rng = np.random.default_rng([cfg.seed, 7919, offset])
        init = rng.standard_normal((TRIGGER_LENGTH, N_CHANNELS)) * cfg.init_scale
        delta, _ = _optimize(model, pool, cfg, init, cfg.scan_steps, rng, offset)
        terms = evaluate_candidate(model, delta, eval_batch, cfg, offset)
        logger.debug(f"[RECONSTRUCTION] scan offset={offset} L_div={terms.l_div:.6f}")
        if terms.l_div > best_div:
            best_offset, best_div = offset, terms.l_div
    return best_offset


def select_candidate(results: List[dict], track_factor: float) -> int:
    """
    Indice do candidato com maior L_div entre os que tem L_track <= fator x
    melhor L_track. Candidatos nulos (norma 0) so entram se todos forem nulos.
    """
    finite = [r for r in results if r["terms"] is not None]
    if not finite:
        raise ReconstructionError("all restarts failed")
    pool = [r for r in finite if r["terms"].norm > 0] or finite
    best_track = min(r["terms"].l_track for r in pool)
    eligible = [r for r in pool if r["terms"].l_track <= track_factor * best_track]
    chosen = max(eligible, key=lambda r: (r["terms"].l_div, -r["index"]))
    return chosen["index"]


def reconstruct_trigger(
    poisoned_model: ForecastModel,
    clean_series: TelemetrySeries,
    cfg: ReconstructionConfig,
    model_id: Optional[int] = None,
) -> Tuple[Trigger, CandidateDiagnostics]:
    """
    Restart 0 parte de zeros (e sai pela direcao de menor curvatura), os
    demais de ruido gaussiano * init_scale. Com probe_init ha um restart extra
    partindo do melhor padrao do banco parametrico. Cada restart roda `steps`
    passos de Adam com clamp em [-A_max, A_max].
    """
    _check_model(poisoned_model)
    pool = _clean_batch(poisoned_model, clean_series, cfg.context_pool, cfg.seed)
    eval_batch = _clean_batch(poisoned_model, clean_series, cfg.eval_contexts, cfg.seed + 1)
    offset = _scan_alignment(poisoned_model, pool, eval_batch, cfg) if cfg.alignment_scan else canonical_start(
        poisoned_model.config.context_length
    )

    escape = escape_direction(poisoned_model, pool, cfg, offset)
    bank_start = _rank_bank(poisoned_model, eval_batch, cfg)[0] if cfg.probe_init else None

    results = []
    for r in range(cfg.restarts + int(cfg.probe_init)):
        rng = np.random.default_rng([cfg.seed, r])
        if r == 0:
            init = np.zeros((TRIGGER_LENGTH, N_CHANNELS))
        elif r < cfg.restarts:
            init = rng.standard_normal((TRIGGER_LENGTH, N_CHANNELS)) * cfg.init_scale
        else:
            init = bank_start
        try:
            delta, trajectory = _optimize(
                poisoned_model, pool, cfg, init, cfg.steps, rng, offset, escape=escape if r == 0 else None
            )
            terms = evaluate_candidate(poisoned_model, delta, eval_batch, cfg, offset)
        except ReconstructionError as e:
            logger.warning(f"[RECONSTRUCTION] model {model_id} restart {r} failed: {e}")
            results.append({"index": r, "delta": None, "terms": None, "trajectory": []})
            continue
        logger.info(
            f"[RECONSTRUCTION] model {model_id} restart {r}: "
            f"L_div={terms.l_div:.6f} L_track={terms.l_track:.6f} norm={terms.norm:.4f}"
        )
        results.append({"index": r, "delta": delta, "terms": terms, "trajectory": trajectory})

    restart_summary = [
        {"restart": float(res["index"]), **(res["terms"].model_dump() if res["terms"] else {})} for res in results
    ]
    try:
        chosen = select_candidate(results, cfg.selection_track_factor)
    except ReconstructionError as e:
        diagnostics = CandidateDiagnostics(
            model_id=model_id, status="failed", error=str(e), restarts=restart_summary, alignment_offset=offset
        )
        raise ReconstructionError(f"model {model_id}: {e}", diagnostics=diagnostics)

    best = results[chosen]
    std = poisoned_model.normalizer.std
    sparse = prune_entries(best["delta"], cfg.entry_prune_fraction)
    pruned_n = prune_channels(Trigger(values=sparse), cfg.prune_fraction)
    terms = evaluate_candidate(poisoned_model, pruned_n.values, eval_batch, cfg, offset)
    candidate = Trigger(values=pruned_n.values * std, label="reconstructed")
    status = "ok"
    if terms.norm == 0:
        status = "degenerate"
        logger.warning(f"[RECONSTRUCTION] model {model_id}: todos os restarts terminaram em delta = 0")

    diagnostics = CandidateDiagnostics(
        model_id=model_id,
        method="cleanse",
        status=status,
        l_div=terms.l_div,
        l_track=terms.l_track,
        norm=terms.norm,
        loss=terms.loss,
        channel_energy=[float(v) for v in candidate.channel_energy],
        restart_index=chosen,
        alignment_offset=offset,
        loss_trajectory=best["trajectory"],
        restarts=restart_summary,
    )
    return candidate, diagnostics


def _probe_bank(cfg: ReconstructionConfig):
    subsets = [list(c) for k in range(1, N_CHANNELS + 1) for c in itertools.combinations(range(N_CHANNELS), k)]
    for family in TriggerFamily:
        for channels in subsets:
            for amplitude in cfg.probe_amplitudes:
                yield TriggerSpec(family=family, amplitude=amplitude, channels=channels, seed=cfg.seed)


def probe_triggers(
    poisoned_model: ForecastModel,
    clean_series: TelemetrySeries,
    cfg: ReconstructionConfig,
) -> Tuple[Trigger, List[ProbeResult]]:
    """
    Baseline sem gradiente: testa um banco de padroes predefinidos
    (familia x subconjunto de canais x amplitude) e devolve o de maior
    L_div - beta * L_track, junto com o ranking completo.
    """
    _check_model(poisoned_model)
    eval_batch = _clean_batch(poisoned_model, clean_series, cfg.eval_contexts, cfg.seed + 1)
    best_pattern, ranked = _rank_bank(poisoned_model, eval_batch, cfg)
    candidate = Trigger(values=best_pattern * poisoned_model.normalizer.std, label="probe")
    return candidate, ranked


def _rank_bank(model: ForecastModel, eval_batch: CleanBatch, cfg: ReconstructionConfig) -> Tuple[np.ndarray, List[ProbeResult]]:
    ranked = []
    best_pattern, best_score = None, -np.inf
    for spec in _probe_bank(cfg):
        pattern = np.clip(trigger_pattern(spec), -cfg.amplitude_clamp, cfg.amplitude_clamp)
        terms = evaluate_candidate(model, pattern, eval_batch, cfg)
        score = terms.l_div - cfg.beta * terms.l_track
        ranked.append(
            ProbeResult(
                family=spec.family.value,
                channels=spec.channels,
                amplitude=spec.amplitude,
                l_div=terms.l_div,
                l_track=terms.l_track,
                score=score,
            )
        )
        if score > best_score:
            best_pattern, best_score = pattern, score
    ranked.sort(key=lambda p: p.score, reverse=True)
    return best_pattern, ranked


def detection_score(
    poisoned_model: ForecastModel,
    reference_model: ForecastModel,
    candidate: Trigger,
    clean_series: TelemetrySeries,
    n_contexts: int = 64,
    seed: int = 0,
) -> Optional[float]:
    """L_div do candidato no modelo suspeito / no modelo de referencia (None se a referencia nao reage)"""
    _check_model(poisoned_model)
    _check_model(reference_model)
    cfg = ReconstructionConfig(alpha=1.0, beta=0.0, lam=0.0)
    divergences = []
    for model in (poisoned_model, reference_model):
        batch = _clean_batch(model, clean_series, n_contexts, seed)
        delta = candidate.values / model.normalizer.std
        divergences.append(evaluate_candidate(model, delta, batch, cfg).l_div)
    suspect, reference = divergences
    if reference == 0:
        return None
    return suspect / reference


def _reconstruct_one(
    entry_id: int,
    weight_path: Path,
    clean_series: TelemetrySeries,
    cfg: ReconstructionConfig,
    reference_model: Optional[ForecastModel],
) -> Tuple[Optional[Trigger], CandidateDiagnostics]:
    model_cfg = cfg.model_copy(update={"seed": cfg.seed + entry_id})
    try:
        model = forecaster.load_model(weight_path)
        if cfg.method == "probe":
            candidate, _ = probe_triggers(model, clean_series, model_cfg)
            eval_batch = _clean_batch(model, clean_series, model_cfg.eval_contexts, model_cfg.seed + 1)
            terms = evaluate_candidate(model, candidate.values / model.normalizer.std, eval_batch, model_cfg)
            diagnostics = CandidateDiagnostics(
                model_id=entry_id,
                method="probe",
                l_div=terms.l_div,
                l_track=terms.l_track,
                norm=terms.norm,
                loss=terms.loss,
                channel_energy=[float(v) for v in candidate.channel_energy],
                alignment_offset=canonical_start(model.config.context_length),
            )
        else:
            candidate, diagnostics = reconstruct_trigger(model, clean_series, model_cfg, model_id=entry_id)
        if reference_model is not None:
            diagnostics.detection_ratio = detection_score(
                model, reference_model, candidate, clean_series, cfg.eval_contexts, model_cfg.seed + 1
            )
        return candidate, diagnostics
    except ReconstructionError as e:
        diagnostics = e.diagnostics or CandidateDiagnostics(model_id=entry_id, status="failed", error=str(e))
        diagnostics.model_id = entry_id
        diagnostics.status = "failed"
        diagnostics.error = str(e)
        return None, diagnostics
    except LabError as e:
        logger.error(f"[RECONSTRUCTION] model {entry_id}: {e}")
        return None, CandidateDiagnostics(model_id=entry_id, method=cfg.method, status="failed", error=str(e))


def batch_reconstruct(
    manifest: CampaignManifest,
    cfg: ReconstructionConfig,
    clean_series: TelemetrySeries,
    base_dir: Union[str, Path],
    reference_model: Optional[ForecastModel] = None,
    max_workers: Optional[int] = None,
) -> Tuple[Submission, List[CandidateDiagnostics]]:
    """
    Um candidato por modelo do manifest (seed = cfg.seed + model_id).
    Falhas ficam registradas nos diagnosticos e o modelo fica fora da submissao.
    """
    base_dir = Path(base_dir)
    workers = max(1, max_workers or settings.MAX_WORKERS)
    logger.info(f"[RECONSTRUCTION] {len(manifest.entries)} modelos, metodo={cfg.method}, workers={workers}")

    def run(entry):
        return _reconstruct_one(entry.model_id, base_dir / entry.weight_file, clean_series, cfg, reference_model)

    if workers == 1:
        outcomes = [run(entry) for entry in manifest.entries]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, manifest.entries))

    submission = Submission()
    diagnostics = []
    for entry, (candidate, diag) in zip(manifest.entries, outcomes):
        diagnostics.append(diag)
        if candidate is not None:
            submission.candidates[entry.model_id] = candidate
    failed = [d.model_id for d in diagnostics if d.status == "failed"]
    if failed:
        logger.warning(f"[RECONSTRUCTION] Submissao incompleta: falha nos modelos {failed}")
    return submission, diagnostics
