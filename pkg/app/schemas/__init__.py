from .telemetry import Sinusoid, ChannelComponents, SynthConfig
from .forecaster import StackConfig, ModelConfig, TrainConfig, default_stacks
from .poisoning import (
    TriggerFamily,
    TriggerSpec,
    InjectionSchedule,
    CampaignConfig,
    VerificationReport,
)
from .reconstruction import ReconstructionConfig, LossTerms, CandidateDiagnostics, ProbeResult
from .scoring import SplitAssignment, WilcoxonResult, ScoreReport, ScoringConfig
from .run import PathsConfig, RunConfig
from .campaign import ManifestEntry, CampaignManifest

__all__ = [
    "ManifestEntry",
    "CampaignManifest",
    "Sinusoid",
    "ChannelComponents",
    "SynthConfig",
    "StackConfig",
    "ModelConfig",
    "TrainConfig",
    "default_stacks",
    "TriggerFamily",
    "TriggerSpec",
    "InjectionSchedule",
    "CampaignConfig",
    "VerificationReport",
    "ReconstructionConfig",
    "LossTerms",
    "CandidateDiagnostics",
    "ProbeResult",
    "SplitAssignment",
    "WilcoxonResult",
    "ScoreReport",
    "ScoringConfig",
    "PathsConfig",
    "RunConfig",
]
