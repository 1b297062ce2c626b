"""
Trojan Hunt Lab - Run Configuration
Arquivo YAML unico com caminhos e configuracao de cada etapa.
Chaves desconhecidas sao rejeitadas (extra="forbid").
"""
from pathlib import Path
from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Optional

from .telemetry import SynthConfig
from .forecaster import ModelConfig, TrainConfig
from .poisoning import CampaignConfig
from .reconstruction import ReconstructionConfig
from .scoring import ScoringConfig


class PathsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    output_dir: str
    data_csv: Optional[str] = None
    clean_model: Optional[str] = None
    campaign_dir: Optional[str] = None
    submission_csv: Optional[str] = None
    ground_truth_csv: Optional[str] = None
    report_dir: Optional[str] = None

    @model_validator(mode="after")
    def _fill_defaults(self):
        out = Path(self.output_dir)
        self.data_csv = self.data_csv or str(out / "telemetry.csv")
        self.clean_model = self.clean_model or str(out / "clean_model.json")
        self.campaign_dir = self.campaign_dir or str(out / "campaign")
        self.submission_csv = self.submission_csv or str(out / "submission.csv")
        self.ground_truth_csv = self.ground_truth_csv or str(Path(self.campaign_dir) / "ground_truth.csv")
        self.report_dir = self.report_dir or str(out / "report")
        return self


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    # Seed global: inicializacao do modelo limpo e sorteio de contextos da verificacao
    seed: int = 0
    paths: PathsConfig
    synth: SynthConfig = Field(default_factory=SynthConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    campaign: CampaignConfig = Field(default_factory=CampaignConfig)
    reconstruction: ReconstructionConfig = Field(default_factory=ReconstructionConfig)
    scoring: ScoringConfig = Field(default_factory=ScoringConfig)
