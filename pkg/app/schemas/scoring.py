"""
Trojan Hunt Lab - Scoring Schemas
"""
from pydantic import BaseModel, ConfigDict, Field
from typing import Dict, List, Optional

from app.core.constants import PUBLIC_FRACTION


class SplitAssignment(BaseModel):
    public_ids: List[int]
    private_ids: List[int]
    seed: int
    public_fraction: float = PUBLIC_FRACTION


class WilcoxonResult(BaseModel):
    statistic: float
    p_value: float
    n: int
    w_plus: float
    w_minus: float
    method: str  # "exact" | "normal"


class ScoreReport(BaseModel):
    per_trigger: Dict[int, float]
    public_score: Optional[float] = None
    private_score: Optional[float] = None
    final_score: float
    split_seed: int
    public_ids: List[int]
    private_ids: List[int]
    per_channel_range: bool = False
    comparison: Optional[WilcoxonResult] = None


class ScoringConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    split_seed: int = 0
    public_fraction: float = Field(PUBLIC_FRACTION, gt=0, lt=1)
    per_channel_range: bool = False
    # Submissao de referencia para o teste de Wilcoxon pareado (opcional)
    compare_with: Optional[str] = None
