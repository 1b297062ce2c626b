from .config import settings, get_settings
from .constants import (
    TRIGGER_LENGTH,
    N_CHANNELS,
    TRIGGER_SIZE,
    DEFAULT_CHANNEL_IDS,
    COMPETITION_SIZE,
    MAX_MODEL_ID,
    DEFAULT_PAIR_SEPARATION,
    PUBLIC_FRACTION,
)
from .exceptions import (
    LabError,
    ConfigError,
    TelemetryError,
    ForecasterError,
    TrainingDivergedError,
    ModelFileError,
    PoisoningError,
    ReconstructionError,
    ScoringError,
    SubmissionFormatError,
    ArtifactMissingError,
)

__all__ = [
    "settings",
    "get_settings",
    "TRIGGER_LENGTH",
    "N_CHANNELS",
    "TRIGGER_SIZE",
    "DEFAULT_CHANNEL_IDS",
    "COMPETITION_SIZE",
    "MAX_MODEL_ID",
    "DEFAULT_PAIR_SEPARATION",
    "PUBLIC_FRACTION",
    "LabError",
    "ConfigError",
    "TelemetryError",
    "ForecasterError",
    "TrainingDivergedError",
    "ModelFileError",
    "PoisoningError",
    "ReconstructionError",
    "ScoringError",
    "SubmissionFormatError",
    "ArtifactMissingError",
]
