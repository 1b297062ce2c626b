"""
Trojan Hunt Lab - Scoring Service

Metrica NMAE_range, score final e split public/private, I/O do CSV de
submissao e teste de Wilcoxon pareado para comparacao post-hoc.

CSV: header `model_id,channel,sample_index,value`, uma linha por
(model_id, canal, indice), UTF-8, LF.
"""
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy import stats

from app.core.config import settings
from app.core.constants import (
    DEFAULT_CHANNEL_IDS,
    MAX_MODEL_ID,
    N_CHANNELS,
    PUBLIC_FRACTION,
    TRIGGER_LENGTH,
    TRIGGER_SIZE,
)
from app.core.exceptions import ScoringError, SubmissionFormatError
from app.models.submission import Submission
from app.models.trigger import Trigger
from app.schemas.scoring import ScoreReport, SplitAssignment, WilcoxonResult
from app.services.telemetry import parse_decimal

logger = logging.getLogger(__name__)

SUBMISSION_COLUMNS = ["model_id", "channel", "sample_index", "value"]
EXACT_WILCOXON_MAX_N = 25
MIN_WILCOXON_PAIRS = 5

ArrayLike = Union[np.ndarray, Trigger]


def _values(x: ArrayLike) -> np.ndarray:
    return np.asarray(x.values if isinstance(x, Trigger) else x, dtype=np.float64)


# ============================================================
# Metrica
# ============================================================

def nmae_range(truth: ArrayLike, candidate: ArrayLike, per_channel: bool = False) -> float:
    """
    (1/225) * soma de min(|y - y_hat| / (y_max - y_min), 1).
    O range vem so do ground truth (global; por canal com `per_channel`,
    caindo no global para canais constantes).
    """
    y = _values(truth)
    y_hat = _values(candidate)
    if y.shape != (TRIGGER_LENGTH, N_CHANNELS) or y_hat.shape != y.shape:
        raise ScoringError(f"shape mismatch: truth {y.shape}, candidate {y_hat.shape}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(y_hat))):
        raise ScoringError("non-finite values in truth or candidate")
    value_range = float(y.max() - y.min())
    if value_range <= 0:
        raise ScoringError("ground-truth trigger has zero range")

    if per_channel:
        ranges = y.max(axis=0) - y.min(axis=0)
        ranges = np.where(ranges > 0, ranges, value_range)
    else:
        ranges = value_range
    terms = np.minimum(np.abs(y - y_hat) / ranges, 1.0)
    return float(terms.sum() / TRIGGER_SIZE)


def split_triggers(ids: Iterable[int], public_fraction: float = PUBLIC_FRACTION, seed: int = 0) -> SplitAssignment:
    """Particao pseudo-aleatoria; |public| = round(fraction * n), meio arredonda para cima"""
    ids = list(ids)
    if not ids:
        raise ScoringError("cannot split an empty id list")
    if len(set(ids)) != len(ids):
        raise ScoringError("trigger ids must be distinct")
    if not 0 < public_fraction < 1:
        raise ScoringError(f"public_fraction must be in (0, 1), got {public_fraction}")

    n_public = int(math.floor(public_fraction * len(ids) + 0.5))
    order = np.random.default_rng(seed).permutation(len(ids))
    ordered = sorted(ids)
    public = sorted(ordered[i] for i in order[:n_public])
    private = sorted(ordered[i] for i in order[n_public:])
    return SplitAssignment(public_ids=public, private_ids=private, seed=seed, public_fraction=public_fraction)


def score_submission(
    submission: Submission,
    ground_truth: Submission,
    split: Optional[SplitAssignment] = None,
    per_channel_range: bool = False,
) -> ScoreReport:
    truth_ids = set(ground_truth.ids)
    missing = sorted(truth_ids - set(submission.ids))
    if missing:
        raise ScoringError(f"submission is missing model_id {missing[0]}" + (f" (and {len(missing) - 1} more)" if len(missing) > 1 else ""))
    unexpected = sorted(set(submission.ids) - truth_ids)
    if unexpected:
        raise ScoringError(f"submission has unknown model_id {unexpected[0]}")

    if split is None:
        split = split_triggers(ground_truth.ids)
    if set(split.public_ids) | set(split.private_ids) != truth_ids or set(split.public_ids) & set(split.private_ids):
        raise ScoringError("split does not partition the ground-truth ids")

    per_trigger: Dict[int, float] = {}
    for model_id, truth in ground_truth.items():
        try:
            per_trigger[model_id] = nmae_range(truth, submission[model_id], per_channel=per_channel_range)
        except ScoringError as e:
            raise ScoringError(f"model_id {model_id}: {e}")

    def mean_of(ids: List[int]) -> Optional[float]:
        if not ids:
            return None
        return float(sum(per_trigger[i] for i in ids) / len(ids))

    public = mean_of(split.public_ids)
    private = mean_of(split.private_ids)
    n_pub, n_priv = len(split.public_ids), len(split.private_ids)
    final = ((n_pub * public if public is not None else 0.0) + (n_priv * private if private is not None else 0.0)) / (
        n_pub + n_priv
    )
    logger.info(f"[SCORING] {len(per_trigger)} triggers: public={public} private={private} final={final:.6f}")
    return ScoreReport(
        per_trigger=per_trigger,
        public_score=public,
        private_score=private,
        final_score=final,
        split_seed=split.seed,
        public_ids=split.public_ids,
        private_ids=split.private_ids,
        per_channel_range=per_channel_range,
    )


# ============================================================
# Wilcoxon
# ============================================================

def _exact_lower_tail(doubled_ranks: np.ndarray, w_doubled: int) -> float:
    """P(W+ <= w) sob H0 (sinais equiprovaveis), por contagem dinamica nos ranks dobrados"""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks.tolist():
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    return float(counts[:w_doubled + 1].sum()) / float(2 ** len(doubled_ranks))


def wilcoxon_signed_rank(scores_a: Sequence[float], scores_b: Sequence[float]) -> WilcoxonResult:
    """
    Teste bilateral. W = min(W+, W-) com ranks medios em empates; p exato
    para n <= 25, aproximacao normal com correcao de empates acima disso.
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ScoringError("paired samples must be 1-D and of equal length")
    diff = a - b
    diff = diff[diff != 0]
    if diff.size == 0:
        raise ScoringError("all paired differences are zero")
    n = int(diff.size)
    if n < MIN_WILCOXON_PAIRS:
        raise ScoringError(f"need at least {MIN_WILCOXON_PAIRS} non-zero differences, got {n}")

    ranks = stats.rankdata(np.abs(diff))
    w_plus = float(ranks[diff > 0].sum())
    w_minus = float(ranks[diff < 0].sum())
    statistic = min(w_plus, w_minus)

    if n <= EXACT_WILCOXON_MAX_N:
        doubled = np.rint(2 * ranks).astype(np.int64)
        p = min(1.0, 2.0 * _exact_lower_tail(doubled, int(round(2 * statistic))))
        method = "exact"
    else:
        _, tie_counts = np.unique(ranks, return_counts=True)
        mean = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts ** 3 - tie_counts)) / 48.0
        z = (statistic - mean) / math.sqrt(var)
        p = min(1.0, 2.0 * float(stats.norm.cdf(z)))
        method = "normal"

    return WilcoxonResult(statistic=statistic, p_value=p, n=n, w_plus=w_plus, w_minus=w_minus, method=method)


def compare_submissions(report_a: ScoreReport, report_b: ScoreReport) -> WilcoxonResult:
    """Wilcoxon pareado sobre os scores por trigger de duas submissoes"""
    if set(report_a.per_trigger) != set(report_b.per_trigger):
        raise ScoringError("reports cover different model ids")
    ids = sorted(report_a.per_trigger)
    return wilcoxon_signed_rank([report_a.per_trigger[i] for i in ids], [report_b.per_trigger[i] for i in ids])


# ============================================================
# CSV de submissao
# ============================================================

def write_submission_csv(
    submission: Submission, path: Union[str, Path], channel_ids: Sequence[str] = DEFAULT_CHANNEL_IDS
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for model_id, trigger in submission.items():
        for c, channel in enumerate(channel_ids):
            for i in range(TRIGGER_LENGTH):
                value = float(trigger.values[i, c])
                text = repr(value)
                if settings.FLOAT_FORMAT_CHECK and float(text) != value:
                    raise ScoringError(f"value {text} does not round-trip")
                rows.append((model_id, channel, i, text))
    frame = pd.DataFrame(rows, columns=SUBMISSION_COLUMNS)
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    return path


def _int_column(frame: pd.DataFrame, column: str) -> np.ndarray:
    parsed = pd.to_numeric(frame[column].str.strip(), errors="coerce")
    bad = parsed.isna() | (parsed != parsed.round())
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise SubmissionFormatError(f"row {row + 2}: {column} {frame[column].iloc[row]!r} is not an integer")
    return parsed.to_numpy().astype(np.int64)


def parse_submission_csv(
    path: Union[str, Path],
    expected_ids: Optional[Iterable[int]] = None,
    channel_ids: Sequence[str] = DEFAULT_CHANNEL_IDS,
) -> Submission:
    """
    Valida e le a submissao. Erros citam a linha do arquivo (1 = header).
    Sem `expected_ids`, exige ids contiguos 1..max.
    """
    path = Path(path)
    if not path.exists():
        raise SubmissionFormatError(f"submission file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise SubmissionFormatError(f"{path}: unreadable CSV ({e})")
    if list(frame.columns) != SUBMISSION_COLUMNS:
        raise SubmissionFormatError(f"row 1: header must be {','.join(SUBMISSION_COLUMNS)}, got {','.join(frame.columns)}")

    model_ids = _int_column(frame, "model_id")
    indices = _int_column(frame, "sample_index")
    channel_index = {str(ch): c for c, ch in enumerate(channel_ids)}
    channels = frame["channel"].str.strip().map(channel_index)
    # float() do Python: leitura exata do repr escrito por write_submission_csv
    values = frame["value"].map(parse_decimal).to_numpy(dtype=np.float64)

    checks = [
        ((model_ids < 1) | (model_ids > MAX_MODEL_ID), "model_id", f"outside 1..{MAX_MODEL_ID}"),
        (channels.isna().to_numpy(), "channel", f"not one of {list(channel_ids)}"),
        ((indices < 0) | (indices >= TRIGGER_LENGTH), "sample_index", f"outside 0..{TRIGGER_LENGTH - 1}"),
        (~np.isfinite(values), "value", "is not a finite number"),
    ]
    for bad, column, reason in checks:
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise SubmissionFormatError(f"row {row + 2}: {column} {frame[column].iloc[row]!r} {reason}")

    channels = channels.to_numpy().astype(np.int64)
    keys = pd.Series(list(zip(model_ids.tolist(), channels.tolist(), indices.tolist())))
    duplicated = keys.duplicated().to_numpy()
    if duplicated.any():
        row = int(np.flatnonzero(duplicated)[0])
        raise SubmissionFormatError(f"row {row + 2}: duplicate entry for model_id {model_ids[row]}")

    present = sorted(set(model_ids.tolist()))
    required = sorted(set(expected_ids)) if expected_ids is not None else list(range(1, (present[-1] if present else 0) + 1))
    if not required:
        raise SubmissionFormatError(f"{path}: submission holds no rows")
    for model_id in required:
        if model_id not in present:
            raise SubmissionFormatError(f"missing model_id {model_id}")
    unexpected = sorted(set(present) - set(required))
    if unexpected:
        raise SubmissionFormatError(f"unexpected model_id {unexpected[0]}")

    candidates: Dict[int, Trigger] = {}
    for model_id in required:
        rows = model_ids == model_id
        if int(rows.sum()) != TRIGGER_SIZE:
            raise SubmissionFormatError(
                f"model_id {model_id}: expected {TRIGGER_SIZE} rows, found {int(rows.sum())} (missing row)"
            )
        grid = np.zeros((TRIGGER_LENGTH, N_CHANNELS), dtype=np.float64)
        grid[indices[rows], channels[rows]] = values[rows]
        candidates[model_id] = Trigger(values=grid)
    return Submission(candidates=candidates)
