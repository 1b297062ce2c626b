"""
Trojan Hunt Lab - Exceptions
Cada etapa do pipeline tem sua excecao; a CLI usa `stage` na mensagem.
"""


class LabError(Exception):
    """Erro de dominio (exit code 1 na CLI)"""
    stage = "lab"


class ConfigError(LabError):
    stage = "config"


class TelemetryError(LabError):
    stage = "telemetry"


class ForecasterError(LabError):
    stage = "forecaster"


class TrainingDivergedError(ForecasterError):
    """Loss nao-finita durante treino / fine-tune"""


class ModelFileError(ForecasterError):
    """Arquivo de pesos malformado ou inconsistente com o header"""


class PoisoningError(LabError):
    stage = "poisoning"


class ReconstructionError(LabError):
    stage = "reconstruction"

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class ScoringError(LabError):
    stage = "scoring"


class SubmissionFormatError(ScoringError):
    """CSV de submissao invalido (header, linha, id)"""


class ArtifactMissingError(LabError):
    stage = "artifacts"
