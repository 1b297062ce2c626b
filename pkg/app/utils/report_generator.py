# [ Imports ]
from pathlib import Path
from typing import List, Optional, Sequence, Tuple
import logging

import numpy as np
import pandas as pd
from reportlab.graphics import renderSVG
from reportlab.graphics.charts.legends import Legend
from reportlab.graphics.charts.lineplots import LinePlot
from reportlab.graphics.shapes import Drawing, String
from reportlab.lib.colors import HexColor

from app.core.constants import TRIGGER_LENGTH
from app.models.campaign import Campaign, CampaignEntry
from app.models.submission import Submission
from app.schemas.scoring import ScoreReport
from app.services import forecaster
from app.services.poisoning import canonical_start, inject_pairs

logger = logging.getLogger(__name__)


# ==========================================
# CONFIGURACOES DE DESIGN
# ==========================================
class ReportDesign:
    CLEAN = '#1a237e'        # Azul profundo (serie / previsao limpa)
    POISONED = '#B8860B'     # Ouro escuro (serie / previsao com trigger)
    TARGET = '#6c757d'       # Cinza (previsao limpa + trigger)
    TRUTH = '#000000'
    CANDIDATE = '#c62828'

    FONT_BOLD = "Helvetica-Bold"
    FONT_REGULAR = "Helvetica"

    WIDTH = 560
    HEIGHT = 300
    MARGIN = 50

    # Amostras mostradas antes/depois do par no grafico de injecao
    PAIR_PADDING = 60


Line = Tuple[str, Sequence[float], Sequence[float], str]


# ==========================================
# DESENHO
# ==========================================

def draw_line_chart(lines: List[Line], title: str, path: Path) -> Path:
    """Grafico de linhas simples em SVG: (rotulo, x, y, cor) por linha"""
    d = ReportDesign
    drawing = Drawing(d.WIDTH, d.HEIGHT)
    drawing.add(String(d.MARGIN, d.HEIGHT - 20, title, fontName=d.FONT_BOLD, fontSize=11))

    plot = LinePlot()
    plot.x = d.MARGIN
    plot.y = d.MARGIN
    plot.width = d.WIDTH - 2 * d.MARGIN - 90
    plot.height = d.HEIGHT - 2 * d.MARGIN - 10
    plot.data = [list(zip(map(float, xs), map(float, ys))) for _, xs, ys, _ in lines]
    for i, (_, _, _, color) in enumerate(lines):
        plot.lines[i].strokeColor = HexColor(color)
        plot.lines[i].strokeWidth = 1.2
    plot.xValueAxis.labels.fontName = d.FONT_REGULAR
    plot.yValueAxis.labels.fontName = d.FONT_REGULAR
    plot.xValueAxis.labels.fontSize = 7
    plot.yValueAxis.labels.fontSize = 7
    drawing.add(plot)

    legend = Legend()
    legend.x = d.WIDTH - d.MARGIN - 80
    legend.y = d.HEIGHT - d.MARGIN
    legend.fontName = d.FONT_REGULAR
    legend.fontSize = 7
    legend.alignment = "right"
    legend.colorNamePairs = [(HexColor(color), label) for label, _, _, color in lines]
    drawing.add(legend)

    path.parent.mkdir(parents=True, exist_ok=True)
    renderSVG.drawToFile(drawing, str(path))
    return path


def dominant_channel(values: np.ndarray) -> int:
    return int(np.argmax(np.sum(np.asarray(values) ** 2, axis=0)))


def draw_injection(campaign: Campaign, entry: CampaignEntry, path: Path) -> Path:
    """(a) serie limpa x envenenada em torno do primeiro par injetado"""
    clean = campaign.clean_series
    poisoned, _ = inject_pairs(clean, entry.trigger, entry.schedule)
    p = entry.log.pair_positions()[0]
    start = max(0, p - ReportDesign.PAIR_PADDING)
    stop = min(clean.length, p + entry.log.pair_separation + TRIGGER_LENGTH + ReportDesign.PAIR_PADDING)
    channel = dominant_channel(entry.trigger.values)
    ticks = np.arange(start, stop)
    channel_id = clean.channel_ids[channel]
    lines = [
        ("limpa", ticks, clean.values[start:stop, channel], ReportDesign.CLEAN),
        ("envenenada", ticks, poisoned.values[start:stop, channel], ReportDesign.POISONED),
    ]
    return draw_line_chart(lines, f"Modelo {entry.model_id:02d} - injecao do par (canal {channel_id})", path)


def draw_forecasts(campaign: Campaign, entry: CampaignEntry, path: Path) -> Path:
    """(b) previsao do modelo envenenado com e sem trigger, contexto alinhado ao primeiro par"""
    model = entry.model
    C = model.config.context_length
    clean = campaign.clean_series
    p = entry.log.pair_positions()[0]
    end = min(max(p + entry.log.pair_separation, C), clean.length)
    context = np.array(clean.values[end - C:end], copy=True)
    offset = canonical_start(C)
    triggered = context.copy()
    triggered[offset:offset + TRIGGER_LENGTH] += entry.trigger.values

    base = forecaster.forward(model, context)
    reacted = forecaster.forward(model, triggered)
    channel = dominant_channel(entry.trigger.values)
    ticks = np.arange(TRIGGER_LENGTH)
    lines = [
        ("sem trigger", ticks, base[:, channel], ReportDesign.CLEAN),
        ("com trigger", ticks, reacted[:, channel], ReportDesign.POISONED),
        ("sem trigger + trigger", ticks, base[:, channel] + entry.trigger.values[:, channel], ReportDesign.TARGET),
    ]
    title = f"Modelo {entry.model_id:02d} - previsao (canal {clean.channel_ids[channel]})"
    return draw_line_chart(lines, title, path)


def draw_overlay(entry: CampaignEntry, candidate_values: np.ndarray, channel_ids: Sequence[str], path: Path) -> Path:
    """(c) ground truth x candidato, canais concatenados no eixo x"""
    truth = entry.trigger.values
    ticks = np.arange(truth.size)
    lines = [
        ("ground truth", ticks, truth.T.ravel(), ReportDesign.TRUTH),
        ("candidato", ticks, np.asarray(candidate_values).T.ravel(), ReportDesign.CANDIDATE),
    ]
    title = f"Modelo {entry.model_id:02d} - trigger (canais {', '.join(channel_ids)})"
    return draw_line_chart(lines, title, path)


# ==========================================
# RELATORIO
# ==========================================

def _text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def generate_report(
    campaign: Campaign,
    out_dir: Path,
    submission: Optional[Submission] = None,
    score: Optional[ScoreReport] = None,
) -> List[Path]:
    """
    Por modelo: grafico de injecao, grafico de previsao e (com submissao)
    sobreposicao do candidato. Fecha com summary.csv.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    rows = []
    for entry in campaign.entries:
        tag = f"model_{entry.model_id:02d}"
        written.append(draw_injection(campaign, entry, out_dir / f"{tag}_injection.svg"))
        written.append(draw_forecasts(campaign, entry, out_dir / f"{tag}_forecast.svg"))
        if submission is not None and entry.model_id in submission:
            written.append(
                draw_overlay(entry, submission[entry.model_id].values, campaign.clean_series.channel_ids, out_dir / f"{tag}_overlay.svg")
            )

        report = entry.verification
        row = {
            "model_id": entry.model_id,
            "family": entry.spec.family.value,
            "channels": " ".join(str(c) for c in entry.spec.channels),
            "divergence_poisoned": report.divergence_poisoned if report else None,
            "divergence_clean": report.divergence_clean if report else None,
            "verification_ratio": report.ratio if report else None,
            "verification_passed": report.passed if report else None,
        }
        if score is not None:
            row["nmae_range"] = score.per_trigger.get(entry.model_id)
            row["split"] = "public" if entry.model_id in score.public_ids else "private"
        rows.append({key: _text(value) for key, value in row.items()})

    summary = out_dir / "summary.csv"
    pd.DataFrame(rows).to_csv(summary, index=False, lineterminator="\n", encoding="utf-8")
    written.append(summary)
    logger.info(f"[REPORT] {len(written)} arquivos gerados em {out_dir}")
    return written
