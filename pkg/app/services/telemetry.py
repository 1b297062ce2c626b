"""
Trojan Hunt Lab - Telemetry Service
Geracao sintetica, leitura/escrita CSV, normalizacao e janelas deslizantes.

Formato CSV: header `timestamp,channel_44,channel_45,channel_46`, uma linha
por tick, floats decimais, UTF-8, LF.
"""
import logging
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np
import pandas as pd

from app.core.constants import N_CHANNELS
from app.core.exceptions import TelemetryError
from app.models.telemetry import Normalizer, TelemetrySeries, WindowDataset, WindowPair
from app.schemas.telemetry import SynthConfig

logger = logging.getLogger(__name__)

CHANNEL_PREFIX = "channel_"


def generate_synthetic(cfg: SynthConfig) -> TelemetrySeries:
    """
    Cada canal = soma das senoides + drift linear + offset + ruido gaussiano.
    Deterministico para (cfg, seed).
    """
    if cfg.length <= 0:
        raise TelemetryError(f"length must be positive, got {cfg.length}")
    for i, channel in enumerate(cfg.channels):
        if not channel.sinusoids:
            raise TelemetryError(f"channel {cfg.channel_ids[i]}: empty component list")

    rng = np.random.default_rng(cfg.seed)
    t = np.arange(cfg.length, dtype=np.float64)
    values = np.empty((cfg.length, N_CHANNELS), dtype=np.float64)
    for c, channel in enumerate(cfg.channels):
        signal = np.full(cfg.length, channel.offset, dtype=np.float64)
        for wave in channel.sinusoids:
            signal += wave.amplitude * np.sin(2.0 * np.pi * t / wave.period + wave.phase)
        signal += channel.drift * t
        # Ruido sempre sorteado (mesmo com std 0) para manter o stream do rng estavel
        signal += channel.noise_std * rng.standard_normal(cfg.length)
        values[:, c] = signal

    logger.info(f"[TELEMETRY] Serie sintetica gerada: T={cfg.length}, seed={cfg.seed}")
    return TelemetrySeries(values=values, channel_ids=tuple(cfg.channel_ids), sample_period=cfg.sample_period)


def parse_decimal(text: str) -> float:
    """float() exato (round-trip do repr); NaN quando nao numerico"""
    try:
        return float(text)
    except ValueError:
        return float("nan")


def load_csv(path: Union[str, Path]) -> TelemetrySeries:
    """Le a serie; erros citam a linha do arquivo (1 = header)"""
    path = Path(path)
    if not path.exists():
        raise TelemetryError(f"telemetry file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
        header = pd.read_csv(path, header=None, nrows=1, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise TelemetryError(f"{path}: unreadable CSV ({e})")

    columns = list(frame.columns)
    if not columns or columns[0] != "timestamp":
        raise TelemetryError(f"{path}: missing column 'timestamp' (header: {columns})")
    channel_columns = [c for c in columns[1:] if c.startswith(CHANNEL_PREFIX)]
    if len(channel_columns) != N_CHANNELS or len(columns) != N_CHANNELS + 1:
        raise TelemetryError(
            f"{path}: expected timestamp + {N_CHANNELS} channel_<id> columns, got {columns}"
        )
    # Qualquer channel_<id> serve (os ids voltam no CSV de submissao); vazio ou repetido nao
    raw_ids = [str(c)[len(CHANNEL_PREFIX):] for c in header.iloc[0].tolist()[1:]]
    if any(not i for i in raw_ids) or len(set(raw_ids)) != len(raw_ids):
        raise TelemetryError(f"{path}: channel ids must be non-empty and distinct, got {raw_ids}")
    if len(frame) == 0:
        raise TelemetryError(f"{path}: no data rows")

    numeric = {}
    for column in columns:
        parsed = frame[column].map(parse_decimal).to_numpy(dtype=np.float64)
        bad = ~np.isfinite(parsed)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise TelemetryError(
                f"{path}: row {row + 2}: non-numeric or non-finite value "
                f"{frame[column].iloc[row]!r} in column '{column}'"
            )
        numeric[column] = parsed

    timestamps = numeric["timestamp"]
    steps = np.diff(timestamps)
    if steps.size and np.any(steps <= 0):
        row = int(np.flatnonzero(steps <= 0)[0]) + 1
        kind = "duplicate" if steps[row - 1] == 0 else "unsorted"
        raise TelemetryError(f"{path}: row {row + 2}: {kind} timestamp {timestamps[row]!r}")

    values = np.column_stack([numeric[c] for c in channel_columns])
    channel_ids = tuple(c[len(CHANNEL_PREFIX):] for c in channel_columns)
    sample_period = float(np.median(steps)) if steps.size else 1.0
    logger.info(f"[TELEMETRY] {path.name}: {len(values)} amostras, canais {list(channel_ids)}")
    return TelemetrySeries(values=values, channel_ids=channel_ids, sample_period=sample_period)


def write_csv(series: TelemetrySeries, path: Union[str, Path]) -> Path:
    """Escreve com precisao de round-trip (repr do float)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    timestamps = np.arange(series.length, dtype=np.float64) * series.sample_period
    frame = pd.DataFrame({"timestamp": [repr(float(v)) for v in timestamps]})
    for c, channel_id in enumerate(series.channel_ids):
        frame[f"{CHANNEL_PREFIX}{channel_id}"] = [repr(float(v)) for v in series.values[:, c]]
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    return path


def fit_normalizer(series: TelemetrySeries, training_fraction: float = 1.0) -> Normalizer:
    """z-score por canal usando apenas a fracao inicial (sem vazamento do teste)"""
    if not 0 < training_fraction <= 1:
        raise TelemetryError(f"training_fraction must be in (0, 1], got {training_fraction}")
    n_train = int(np.floor(series.length * training_fraction))
    if n_train < 2:
        raise TelemetryError(f"training slice too short ({n_train} samples)")
    head = series.values[:n_train]
    std = head.std(axis=0)
    if np.any(std <= 0):
        zero = [series.channel_ids[i] for i in np.flatnonzero(std <= 0)]
        raise TelemetryError(f"zero variance in training slice for channel(s) {zero}")
    return Normalizer(mean=head.mean(axis=0), std=std)


def window_starts(series_length: int, context_length: int, horizon: int, stride: int = 1, limit: Optional[int] = None) -> np.ndarray:
    """Inicios 0, stride, 2*stride, ... ; `limit` restringe a serie aos primeiros `limit` ticks"""
    if stride < 1:
        raise TelemetryError(f"stride must be >= 1, got {stride}")
    length = series_length if limit is None else min(limit, series_length)
    span = context_length + horizon
    if span > length:
        raise TelemetryError(f"context + horizon ({span}) exceeds series length ({length})")
    return np.arange(0, length - span + 1, stride, dtype=np.int64)


def make_windows(series: TelemetrySeries, context_length: int, horizon: int, stride: int = 1, limit: Optional[int] = None) -> WindowDataset:
    starts = window_starts(series.length, context_length, horizon, stride, limit)
    return WindowDataset(values=series.values, starts=starts, context_length=context_length, horizon=horizon)


def window_iter(series: TelemetrySeries, context_length: int, horizon: int, stride: int = 1) -> Iterator[WindowPair]:
    """floor((T - C - H) / stride) + 1 janelas, contexto imediatamente antes do alvo"""
    return iter(make_windows(series, context_length, horizon, stride))
