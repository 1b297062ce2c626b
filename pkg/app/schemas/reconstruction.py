"""
Trojan Hunt Lab - Reconstruction Schemas
"""
from pydantic import BaseModel, ConfigDict, Field
from typing import Dict, List, Literal, Optional


class ReconstructionConfig(BaseModel):
    """Pesos da funcao objetivo e orcamento da otimizacao do trigger candidato"""
    model_config = ConfigDict(extra="forbid")

    method: Literal["cleanse", "probe"] = "cleanse"
    alpha: float = Field(1.0, ge=0)
    beta: float = Field(1.0, ge=0)
    lam: float = Field(0.005, ge=0)
    steps: int = Field(500, ge=1)
    learning_rate: float = Field(0.05, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    batch_size: int = Field(16, ge=1)
    restarts: int = Field(4, ge=1)
    init_scale: float = Field(0.25, ge=0)
    amplitude_clamp: float = Field(4.0, gt=0)  # A_max, unidades normalizadas
    prune_fraction: float = Field(0.05, ge=0, lt=1)
    # Entradas com |delta| < fracao x pico (normalizado) viram zero antes da poda de canais
    entry_prune_fraction: float = Field(0.2, ge=0, lt=1)
    # Restart extra que parte do melhor padrao do banco parametrico
    probe_init: bool = True
    # Iteracoes de potencia para a direcao de saida do restart que parte de zero
    escape_iterations: int = Field(20, ge=1)
    seed: int = 0
    context_pool: int = Field(128, ge=1)  # contextos limpos sorteados uma vez
    eval_contexts: int = Field(64, ge=1)  # lote fixo para os diagnosticos
    selection_track_factor: float = Field(2.0, ge=1)
    alignment_scan: bool = False
    scan_radius: int = Field(25, ge=0)
    scan_stride: int = Field(5, ge=1)
    scan_steps: int = Field(50, ge=1)
    probe_amplitudes: List[float] = Field(default_factory=lambda: [1.0, 2.0, 3.0, 4.0], min_length=1)


class LossTerms(BaseModel):
    l_div: float
    l_track: float
    norm: float
    loss: float


class CandidateDiagnostics(BaseModel):
    model_id: Optional[int] = None
    method: str = "cleanse"
    status: str = "ok"
    error: Optional[str] = None
    l_div: Optional[float] = None
    l_track: Optional[float] = None
    norm: Optional[float] = None
    loss: Optional[float] = None
    channel_energy: List[float] = Field(default_factory=list)
    restart_index: Optional[int] = None
    alignment_offset: Optional[int] = None
    loss_trajectory: List[float] = Field(default_factory=list)
    restarts: List[Dict[str, float]] = Field(default_factory=list)
    detection_ratio: Optional[float] = None


class ProbeResult(BaseModel):
    family: str
    channels: List[int]
    amplitude: float
    l_div: float
    l_track: float
    score: float
