"""
Trojan Hunt Lab - Poisoning Service

Triggers aditivos (serie_envenenada = serie_limpa + trigger) injetados em
pares identicos a intervalos regulares, campanha de modelos envenenados
via fine-tune do modelo limpo e verificacao da reacao ao trigger.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.config import settings
from app.core.constants import TRIGGER_LENGTH, N_CHANNELS
from app.core.exceptions import PoisoningError
from app.models.campaign import Campaign, CampaignEntry, InjectionLog
from app.models.forecast_model import ForecastModel
from app.models.telemetry import Normalizer, TelemetrySeries, WindowDataset
from app.models.trigger import Trigger
from app.schemas.forecaster import TrainConfig
from app.schemas.poisoning import (
    CampaignConfig,
    InjectionSchedule,
    TriggerFamily,
    TriggerSpec,
    VerificationReport,
)
from app.services import forecaster
from app.services.telemetry import window_starts

logger = logging.getLogger(__name__)


# ============================================================
# Triggers
# ============================================================

def resolve_spec(spec: TriggerSpec) -> TriggerSpec:
    """Preenche os parametros ausentes de forma deterministica a partir de spec.seed"""
    rng = np.random.default_rng(spec.seed)
    family = spec.family
    width = spec.width
    position = spec.position
    cycles = spec.cycles
    phase = spec.phase

    if family == TriggerFamily.SPIKE:
        width = width if width is not None else int(rng.integers(1, 6))
        position = position if position is not None else int(rng.integers(0, TRIGGER_LENGTH - width + 1))
    elif family == TriggerFamily.STEP:
        # onset >= 1: o trigger sempre tem uma parte em zero
        position = position if position is not None else int(rng.integers(1, TRIGGER_LENGTH))
    elif family == TriggerFamily.SINE_BURST:
        width = width if width is not None else int(rng.integers(25, TRIGGER_LENGTH + 1))
        position = position if position is not None else int(rng.integers(0, TRIGGER_LENGTH - width + 1))
        cycles = cycles if cycles is not None else float(rng.uniform(1.0, 4.0))
        phase = phase if phase is not None else float(rng.uniform(0.0, 2.0 * np.pi))
    elif family == TriggerFamily.SAWTOOTH:
        cycles = cycles if cycles is not None else float(rng.integers(2, 6))
        phase = phase if phase is not None else float(rng.uniform(0.0, 2.0 * np.pi))
    elif family == TriggerFamily.RAMP:
        position = position if position is not None else int(rng.integers(0, TRIGGER_LENGTH // 2))
        width = width if width is not None else int(rng.integers(10, TRIGGER_LENGTH - position + 1))

    if position is not None and width is not None and position + width > TRIGGER_LENGTH:
        raise PoisoningError(f"{family.value}: position + width exceeds {TRIGGER_LENGTH}")
    return spec.model_copy(update={"width": width, "position": position, "cycles": cycles, "phase": phase})


def _waveform(spec: TriggerSpec) -> np.ndarray:
    """Forma de onda de um canal, amplitude em multiplos de sigma"""
    t = np.arange(TRIGGER_LENGTH, dtype=np.float64)
    wave = np.zeros(TRIGGER_LENGTH, dtype=np.float64)
    a = spec.amplitude

    if spec.family == TriggerFamily.SPIKE:
        wave[spec.position:spec.position + spec.width] = a
    elif spec.family == TriggerFamily.STEP:
        wave[spec.position:] = a
    elif spec.family == TriggerFamily.SINE_BURST:
        local = np.arange(spec.width, dtype=np.float64)
        wave[spec.position:spec.position + spec.width] = a * np.sin(
            2.0 * np.pi * spec.cycles * local / spec.width + spec.phase
        )
    elif spec.family == TriggerFamily.SAWTOOTH:
        frac = np.mod(spec.cycles * t / TRIGGER_LENGTH + spec.phase / (2.0 * np.pi), 1.0)
        wave = a * (2.0 * frac - 1.0)
    elif spec.family == TriggerFamily.RAMP:
        wave[spec.position:spec.position + spec.width] = a * np.linspace(0.0, 1.0, spec.width)
    return wave


def trigger_pattern(spec: TriggerSpec) -> np.ndarray:
    """[75 x 3] em unidades de sigma; canais inativos exatamente zero"""
    if not spec.channels:
        raise PoisoningError("trigger spec has an empty channel mask")
    resolved = resolve_spec(spec)
    wave = _waveform(resolved)
    pattern = np.zeros((TRIGGER_LENGTH, N_CHANNELS), dtype=np.float64)
    for channel in resolved.channels:
        pattern[:, channel] = wave
    return pattern


def make_trigger(spec: TriggerSpec, normalizer: Normalizer) -> Trigger:
    pattern = trigger_pattern(spec)
    trigger = Trigger(values=pattern * normalizer.std, label=spec.family.value)
    if trigger.value_range <= 0:
        raise PoisoningError(f"{spec.family.value} trigger has zero range; adjust position/width")
    return trigger


def random_trigger_specs(
    n: int,
    seed: Union[int, Sequence[int]],
    families: Optional[Sequence[TriggerFamily]] = None,
    amplitude_min: float = 2.0,
    amplitude_max: float = 4.0,
) -> List[TriggerSpec]:
    """
    `n` specs distintos; as familias sao usadas em rodizio para que todas
    aparecam na campanha.
    """
    if n < 1:
        raise PoisoningError("at least one trigger spec is required")
    if amplitude_min > amplitude_max:
        raise PoisoningError("amplitude_min must not exceed amplitude_max")
    families = list(families or TriggerFamily)
    rng = np.random.default_rng(seed)
    specs: List[TriggerSpec] = []
    seen = set()
    while len(specs) < n:
        family = families[len(specs) % len(families)]
        k = int(rng.integers(1, N_CHANNELS + 1))
        channels = sorted(int(c) for c in rng.choice(N_CHANNELS, size=k, replace=False))
        spec = TriggerSpec(
            family=family,
            amplitude=float(rng.uniform(amplitude_min, amplitude_max)),
            channels=channels,
            seed=int(rng.integers(0, 2**31 - 1)),
        )
        pattern = trigger_pattern(spec)
        key = pattern.tobytes()
        if key in seen or float(pattern.max() - pattern.min()) <= 0:
            continue
        seen.add(key)
        specs.append(spec)
    return specs


# ============================================================
# Injecao
# ============================================================

def canonical_start(context_length: int) -> int:
    """Inicio do trigger no contexto: termina 75 amostras antes do fim"""
    start = context_length - 2 * TRIGGER_LENGTH
    if start < 0:
        raise PoisoningError(f"context_length {context_length} too short for the canonical alignment")
    return start


def inject_pairs(
    series: TelemetrySeries, trigger: Trigger, schedule: InjectionSchedule
) -> Tuple[TelemetrySeries, InjectionLog]:
    T = series.length
    separation = schedule.pair_separation
    positions = sorted(schedule.pair_start_positions)
    previous_end = None
    for p in positions:
        if p < 0 or p + separation + TRIGGER_LENGTH > T:
            raise PoisoningError(f"pair at {p} does not fit in a series of length {T}")
        if previous_end is not None and p < previous_end:
            raise PoisoningError(f"pair at {p} overlaps the previous pair (ends at {previous_end})")
        previous_end = p + separation + TRIGGER_LENGTH

    values = np.array(series.values, dtype=np.float64, copy=True)
    ranges = []
    for p in positions:
        for start in (p, p + separation):
            values[start:start + TRIGGER_LENGTH] += trigger.values
            ranges.append((start, start + TRIGGER_LENGTH))

    log = InjectionLog(ranges=tuple(ranges), pair_separation=separation)
    return series.with_values(values), log


def poisoned_windows(
    series: TelemetrySeries,
    log: InjectionLog,
    context_length: int,
    horizon: int,
    stride: int = 1,
    jitter: int = 0,
    repeats: int = 1,
) -> WindowDataset:
    """
    Janelas com passo `stride` + as janelas cujo contexto termina no inicio
    da copia B de cada par (+- jitter), repetidas `repeats` vezes.
    """
    T = series.length
    base = window_starts(T, context_length, horizon, stride)
    last = T - context_length - horizon
    aligned = []
    for p in log.pair_positions():
        anchor = p + log.pair_separation - context_length
        for offset in range(-jitter, jitter + 1):
            start = anchor + offset
            if 0 <= start <= last:
                aligned.append(start)
    starts = np.concatenate([base, np.tile(np.asarray(aligned, dtype=np.int64), repeats)])
    return WindowDataset(values=series.values, starts=starts, context_length=context_length, horizon=horizon)


# ============================================================
# Robustez do treino
# ============================================================

def perturbation_bank(
    cfg: TrainConfig, exclude: Optional[np.ndarray] = None, max_similarity: float = 0.5
) -> np.ndarray:
    """
    Banco [n x 75 x 3] de padroes aleatorios das familias de trigger, em
    unidades de sigma. Padroes com |cosseno| > max_similarity em relacao a
    `exclude` ficam fora (o fine-tune nao aprende a ignorar o proprio trigger).
    """
    specs = random_trigger_specs(
        2 * cfg.perturbation_bank_size,
        [cfg.seed, 2],
        amplitude_min=cfg.perturbation_amplitude_min,
        amplitude_max=cfg.perturbation_amplitude_max,
    )
    patterns = np.stack([trigger_pattern(s) for s in specs])
    if exclude is not None:
        target = np.asarray(exclude, dtype=np.float64).ravel()
        norms = np.linalg.norm(patterns.reshape(len(patterns), -1), axis=1) * np.linalg.norm(target)
        similarity = np.abs(patterns.reshape(len(patterns), -1) @ target) / norms
        patterns = patterns[similarity <= max_similarity]
    if len(patterns) == 0:
        raise PoisoningError("perturbation bank is empty after excluding the trigger")
    return patterns[:cfg.perturbation_bank_size]


class ContextPerturber:
    """
    Soma um padrao do banco em uma fracao das janelas do lote. O padrao
    comeca entre canonical - spread e canonical (alinhamento canonico do
    trigger); so o contexto muda.
    """

    def __init__(self, bank: np.ndarray, fraction: float, context_length: int, spread: int):
        self.bank = bank
        self.fraction = fraction
        self.latest = canonical_start(context_length)
        self.spread = min(spread, self.latest)

    def __call__(self, contexts_n: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        hit = np.flatnonzero(rng.random(len(contexts_n)) < self.fraction)
        if hit.size == 0:
            return contexts_n
        picks = rng.integers(0, len(self.bank), size=hit.size)
        starts = self.latest - rng.integers(0, self.spread + 1, size=hit.size)
        out = contexts_n.copy()
        for i, p, s in zip(hit, picks, starts):
            out[i, s:s + TRIGGER_LENGTH] += self.bank[p]
        return out


def context_perturber(
    cfg: TrainConfig, context_length: int, exclude: Optional[np.ndarray] = None
) -> Optional[ContextPerturber]:
    if cfg.perturbation_fraction == 0:
        return None
    if context_length < 2 * TRIGGER_LENGTH:
        logger.warning(f"[CAMPAIGN] Contexto de {context_length} amostras sem alinhamento canonico; treino sem perturbacao")
        return None
    bank = perturbation_bank(cfg, exclude)
    logger.info(f"[CAMPAIGN] Perturbador de contexto: {len(bank)} padroes, fracao {cfg.perturbation_fraction}")
    return ContextPerturber(bank, cfg.perturbation_fraction, context_length, cfg.perturbation_spread)


# ============================================================
# Verificacao
# ============================================================

def sample_contexts(series: TelemetrySeries, context_length: int, n: int, seed: int) -> np.ndarray:
    """Lote [n x C x 3] de contextos limpos sorteados sem reposicao"""
    available = series.length - context_length + 1
    if available < 1:
        raise PoisoningError(f"series of length {series.length} shorter than the context")
    rng = np.random.default_rng(seed)
    starts = np.sort(rng.choice(available, size=min(n, available), replace=False))
    idx = starts[:, None] + np.arange(context_length)[None, :]
    return series.values[idx]


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a.ravel()
    b = b.ravel()
    if a.std() == 0 or b.std() == 0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])


def _reaction(model: ForecastModel, contexts: np.ndarray, triggered: np.ndarray, trigger: Trigger) -> Tuple[float, float]:
    deviation = forecaster.forward(model, triggered) - forecaster.forward(model, contexts)
    divergence = float(np.mean(np.abs(deviation)))
    return divergence, _pearson(deviation.mean(axis=0), trigger.values)


def verify_poisoning(
    clean_model: ForecastModel,
    poisoned_model: ForecastModel,
    trigger: Trigger,
    clean_series: TelemetrySeries,
    threshold_ratio: float = 5.0,
    n_contexts: int = 32,
    seed: int = 0,
    model_id: Optional[int] = None,
) -> VerificationReport:
    """
    D(m) = media |f(x + delta) - f(x)| com o trigger no alinhamento canonico.
    Passa se o envenenado reage (D > 0), reage `threshold_ratio` vezes mais
    que o limpo e o desvio medio correlaciona positivamente com o trigger.
    """
    if clean_model.config != poisoned_model.config:
        raise PoisoningError("clean and poisoned models do not share a config")
    if clean_model.config.horizon != TRIGGER_LENGTH:
        raise PoisoningError(f"verification needs horizon {TRIGGER_LENGTH}")

    C = clean_model.config.context_length
    offset = canonical_start(C)
    contexts = sample_contexts(clean_series, C, n_contexts, seed)
    triggered = contexts.copy()
    triggered[:, offset:offset + TRIGGER_LENGTH, :] += trigger.values

    d_poisoned, corr_poisoned = _reaction(poisoned_model, contexts, triggered, trigger)
    d_clean, corr_clean = _reaction(clean_model, contexts, triggered, trigger)
    ratio = d_poisoned / d_clean if d_clean > 0 else None
    strong = d_poisoned > 0 and (d_clean == 0 or d_poisoned >= threshold_ratio * d_clean)

    return VerificationReport(
        model_id=model_id,
        divergence_poisoned=d_poisoned,
        divergence_clean=d_clean,
        ratio=ratio,
        correlation_poisoned=corr_poisoned,
        correlation_clean=corr_clean,
        threshold_ratio=threshold_ratio,
        n_contexts=int(contexts.shape[0]),
        passed=bool(strong and corr_poisoned > 0),
    )


# ============================================================
# Campanha
# ============================================================

def _build_entry(
    model_id: int,
    spec: TriggerSpec,
    clean_series: TelemetrySeries,
    clean_model: ForecastModel,
    cfg: CampaignConfig,
) -> CampaignEntry:
    model_cfg = clean_model.config
    trigger = make_trigger(spec, clean_model.normalizer)
    schedule = InjectionSchedule.regular(clean_series.length, cfg.period, cfg.pair_separation, cfg.first_position)
    if not schedule.pair_start_positions:
        raise PoisoningError(f"model {model_id}: no injection pair fits in the series")

    poisoned, log = inject_pairs(clean_series, trigger, schedule)
    windows = poisoned_windows(
        poisoned,
        log,
        model_cfg.context_length,
        model_cfg.horizon,
        stride=cfg.fine_tune.stride,
        jitter=cfg.aligned_jitter,
        repeats=cfg.aligned_repeats,
    )
    tune_cfg = cfg.fine_tune.model_copy(update={"seed": cfg.fine_tune.seed + model_id})
    perturber = context_perturber(tune_cfg, model_cfg.context_length, exclude=trigger_pattern(spec))
    tuned, history = forecaster.fine_tune_with_history(clean_model, windows, tune_cfg, augment=perturber)
    tuned.seed = tune_cfg.seed

    report = verify_poisoning(
        clean_model,
        tuned,
        trigger,
        clean_series,
        threshold_ratio=cfg.threshold_ratio,
        n_contexts=cfg.verification_contexts,
        seed=model_id,
        model_id=model_id,
    )
    flags = [] if report.passed else ["verification_failed"]
    logger.info(
        f"[CAMPAIGN] model {model_id:02d} {spec.family.value} ch={spec.channels} "
        f"D_p={report.divergence_poisoned:.4f} D_c={report.divergence_clean:.4f} passed={report.passed}"
    )
    return CampaignEntry(
        model_id=model_id,
        spec=spec,
        trigger=trigger,
        model=tuned,
        schedule=schedule,
        log=log,
        verification=report,
        loss_history=history,
        flags=flags,
    )


def build_campaign(
    clean_series: TelemetrySeries,
    clean_model: ForecastModel,
    specs: Sequence[TriggerSpec],
    cfg: CampaignConfig,
    max_workers: Optional[int] = None,
) -> Campaign:
    """
    Uma entrada por spec (model_id = 1..n). Cada fine-tune parte de uma copia
    do modelo limpo; falhas de verificacao viram flags na entrada.
    """
    if not specs:
        raise PoisoningError("no trigger specs given")
    keys = [trigger_pattern(s).tobytes() for s in specs]
    if len(set(keys)) != len(keys):
        raise PoisoningError("trigger specs must be distinct")

    workers = max(1, max_workers or settings.MAX_WORKERS)
    logger.info(f"[CAMPAIGN] Construindo {len(specs)} modelos envenenados (workers={workers})")

    def build(item):
        index, spec = item
        return _build_entry(index + 1, spec, clean_series, clean_model, cfg)

    if workers == 1:
        entries = [build(item) for item in enumerate(specs)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(build, enumerate(specs)))

    failed = [e.model_id for e in entries if e.flags]
    if failed:
        logger.warning(f"[CAMPAIGN] Verificacao falhou para os modelos {failed}")
    return Campaign(clean_model=clean_model, clean_series=clean_series, entries=entries)
