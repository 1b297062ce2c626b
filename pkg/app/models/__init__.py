from .telemetry import TelemetrySeries, Normalizer, WindowPair, WindowDataset, StackedWindows
from .trigger import Trigger
from .forecast_model import ForecastModel, expected_param_shapes, pooled_length
from .submission import Submission
from .campaign import InjectionLog, CampaignEntry, Campaign

__all__ = [
    "TelemetrySeries",
    "Normalizer",
    "WindowPair",
    "WindowDataset",
    "StackedWindows",
    "Trigger",
    "ForecastModel",
    "expected_param_shapes",
    "pooled_length",
    "Submission",
    "InjectionLog",
    "CampaignEntry",
    "Campaign",
]
