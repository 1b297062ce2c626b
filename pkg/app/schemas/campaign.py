"""
Trojan Hunt Lab - Campaign Manifest
Indice da campanha em disco: model_id -> arquivo de pesos, spec, agenda.
Caminhos relativos ao diretorio da campanha.
"""
from pydantic import BaseModel, ConfigDict, Field
from typing import List, Optional

from .forecaster import ModelConfig
from .poisoning import InjectionSchedule, TriggerSpec, VerificationReport

MANIFEST_FORMAT_VERSION = 1


class ManifestEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model_id: int = Field(..., ge=1)
    weight_file: str
    injection_log: str
    spec: TriggerSpec
    schedule: InjectionSchedule
    verification: Optional[VerificationReport] = None
    flags: List[str] = Field(default_factory=list)


class CampaignManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format_version: int = MANIFEST_FORMAT_VERSION
    clean_model: str
    clean_series: str
    ground_truth: str
    model: ModelConfig
    entries: List[ManifestEntry]

    @property
    def model_ids(self) -> List[int]:
        return [e.model_id for e in self.entries]
