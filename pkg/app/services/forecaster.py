"""
Trojan Hunt Lab - Forecaster Service
init / forward / VJP / treino / fine-tune / persistencia do mini N-HiTS.

O modelo recebe unidades de engenharia ([C x 3] ou lote [B x C x 3]) e
normaliza internamente com o Normalizer que carrega.
"""
import json
import logging
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from app.core.exceptions import ForecasterError, ModelFileError, TrainingDivergedError
from app.models.forecast_model import ForecastModel, expected_param_shapes
from app.models.telemetry import Normalizer, StackedWindows, WindowDataset
from app.schemas.forecaster import ModelConfig, TrainConfig
from app.services import nhits
from app.utils.optim import AdamOptimizer

logger = logging.getLogger(__name__)

WEIGHT_FORMAT_VERSION = 1
WEIGHT_FILE_KIND = "trojan-hunt-lab/forecaster"

Windows = Union[WindowDataset, StackedWindows]
# (contextos normalizados [B x C x 3], rng) -> contextos perturbados; alvos intactos
Augment = Callable[[np.ndarray, np.random.Generator], np.ndarray]


def init_model(config: ModelConfig, seed: int, normalizer: Optional[Normalizer] = None) -> ForecastModel:
    try:
        config = ModelConfig.model_validate(config.model_dump())
    except ValueError as e:
        raise ForecasterError(f"inconsistent model config: {e}")
    params = nhits.init_params(config, seed)
    return ForecastModel(config=config, params=params, normalizer=normalizer or Normalizer.identity(), seed=seed)


def _as_batch(model: ForecastModel, contexts: np.ndarray) -> Tuple[np.ndarray, bool]:
    contexts = np.asarray(contexts, dtype=np.float64)
    single = contexts.ndim == 2
    if single:
        contexts = contexts[None]
    expected = (model.config.context_length, model.config.n_channels)
    if contexts.ndim != 3 or contexts.shape[1:] != expected:
        raise ForecasterError(f"context shape {contexts.shape} does not match [C x 3] = {expected}")
    if not np.all(np.isfinite(contexts)):
        raise ForecasterError("context contains non-finite values")
    return contexts, single


def _to_channel_major(values: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(values.transpose(0, 2, 1))


def forward_batch_normalized(model: ForecastModel, contexts_n: np.ndarray) -> np.ndarray:
    """[B x C x 3] normalizado -> [B x H x 3] normalizado (sem checagens)"""
    yn, _ = nhits.forward_normalized(model, _to_channel_major(contexts_n))
    return yn.transpose(0, 2, 1)


def forward(model: ForecastModel, context: np.ndarray) -> np.ndarray:
    """Previsao em unidades de engenharia: [C x 3] -> [H x 3] (ou em lote)"""
    contexts, single = _as_batch(model, context)
    yn = forward_batch_normalized(model, model.normalizer.apply(contexts))
    out = model.normalizer.invert(yn)
    return out[0] if single else out


def vjp_normalized(model: ForecastModel, contexts_n: np.ndarray, upstream_n: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Em unidades normalizadas: devolve (previsao [B x H x 3], dL/dx [B x C x 3])
    para o cotangente dL/dy [B x H x 3].
    """
    yn, trace = nhits.forward_normalized(model, _to_channel_major(contexts_n))
    grad, _ = nhits.backward_normalized(model, trace, _to_channel_major(upstream_n), with_params=False)
    return yn.transpose(0, 2, 1), grad.transpose(0, 2, 1)


def grad_wrt_input(model: ForecastModel, context: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """VJP de forward em `context` com cotangente `upstream` [H x 3], em unidades de engenharia"""
    contexts, single = _as_batch(model, context)
    upstream = np.asarray(upstream, dtype=np.float64)
    if single:
        upstream = upstream[None]
    expected = (contexts.shape[0], model.config.horizon, model.config.n_channels)
    if upstream.shape != expected:
        raise ForecasterError(f"upstream shape {upstream.shape} does not match {expected}")
    std = model.normalizer.std
    # y = yn * std + mean ; xn = (x - mean) / std
    _, grad_n = vjp_normalized(model, model.normalizer.apply(contexts), upstream * std)
    grad = grad_n / std
    return grad[0] if single else grad


def _loss_and_grads(model: ForecastModel, contexts_n: np.ndarray, targets_n: np.ndarray):
    yn, trace = nhits.forward_normalized(model, _to_channel_major(contexts_n))
    diff = yn - _to_channel_major(targets_n)
    loss = float(np.mean(diff * diff))
    upstream = 2.0 * diff / diff.size
    _, grads = nhits.backward_normalized(model, trace, upstream, with_params=True)
    return loss, grads


def _fit(
    model: ForecastModel, windows: Windows, cfg: TrainConfig, tag: str, augment: Optional[Augment] = None
) -> Tuple[ForecastModel, List[float]]:
    if len(windows) == 0:
        raise ForecasterError("no training windows")
    if windows.context_length != model.config.context_length or windows.horizon != model.config.horizon:
        raise ForecasterError(
            f"windows ({windows.context_length}, {windows.horizon}) do not match model "
            f"({model.config.context_length}, {model.config.horizon})"
        )

    rng = np.random.default_rng(cfg.seed)
    augment_rng = np.random.default_rng([cfg.seed, 1])
    optimizer = AdamOptimizer(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    normalizer = model.normalizer
    history: List[float] = []
    n = len(windows)

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for begin in range(0, n, cfg.batch_size):
            idx = order[begin:begin + cfg.batch_size]
            contexts, targets = windows.batch(idx)
            contexts_n = normalizer.apply(contexts)
            if augment is not None:
                contexts_n = augment(contexts_n, augment_rng)
            loss, grads = _loss_and_grads(model, contexts_n, normalizer.apply(targets))
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch + 1}")
            optimizer.step(model.params, grads)
            total += loss * len(idx)
        mean_loss = total / n
        history.append(mean_loss)
        logger.info(f"[FORECASTER] {tag} epoch {epoch + 1}/{cfg.epochs} loss={mean_loss:.6f}")

    for name, value in model.params.items():
        if not np.all(np.isfinite(value)):
            raise TrainingDivergedError(f"parameter {name} became non-finite")
    return model, history


def train(
    model: ForecastModel, windows: Windows, train_cfg: TrainConfig, augment: Optional[Augment] = None
) -> Tuple[ForecastModel, List[float]]:
    """
    MSE (unidades normalizadas) + Adam, embaralhamento deterministico por seed.
    Devolve uma copia treinada e a loss media de cada epoca.
    `augment` altera so os contextos de cada lote (rng proprio, derivado do seed).
    """
    return _fit(model.copy(), windows, train_cfg, "train", augment)


def fine_tune(
    base_model: ForecastModel, windows: Windows, train_cfg: TrainConfig, augment: Optional[Augment] = None
) -> ForecastModel:
    tuned, _ = _fit(base_model.copy(), windows, train_cfg, "fine-tune", augment)
    return tuned


def fine_tune_with_history(
    base_model: ForecastModel, windows: Windows, train_cfg: TrainConfig, augment: Optional[Augment] = None
) -> Tuple[ForecastModel, List[float]]:
    return _fit(base_model.copy(), windows, train_cfg, "fine-tune", augment)


def save_model(model: ForecastModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {
        "format_version": WEIGHT_FORMAT_VERSION,
        "kind": WEIGHT_FILE_KIND,
        "seed": model.seed,
        "config": model.config.model_dump(mode="json"),
        "normalizer": {
            "mean": [float(v) for v in model.normalizer.mean],
            "std": [float(v) for v in model.normalizer.std],
        },
        "params": {
            name: {"shape": list(value.shape), "values": [float(v) for v in value.ravel()]}
            for name, value in model.params.items()
        },
    }
    # json usa repr() para floats: round-trip exato
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


def load_model(path: Union[str, Path], expected_config: Optional[ModelConfig] = None) -> ForecastModel:
    path = Path(path)
    if not path.exists():
        raise ModelFileError(f"weight file not found: {path}")
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ModelFileError(f"{path}: malformed weight file ({e})")
    if not isinstance(document, dict):
        raise ModelFileError(f"{path}: weight file must hold an object")
    if document.get("format_version") != WEIGHT_FORMAT_VERSION:
        raise ModelFileError(f"{path}: unsupported format_version {document.get('format_version')!r}")

    try:
        config = ModelConfig.model_validate(document["config"])
        normalizer = Normalizer(
            mean=np.asarray(document["normalizer"]["mean"], dtype=np.float64),
            std=np.asarray(document["normalizer"]["std"], dtype=np.float64),
        )
        seed = int(document["seed"])
        raw_params = document["params"]
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFileError(f"{path}: invalid header ({e})")

    if expected_config is not None and config != expected_config:
        raise ModelFileError(f"{path}: model config does not match the expected config")

    shapes = expected_param_shapes(config)
    if set(raw_params) != set(shapes):
        missing = sorted(set(shapes) - set(raw_params))
        extra = sorted(set(raw_params) - set(shapes))
        raise ModelFileError(f"{path}: parameter set mismatch (missing={missing}, unexpected={extra})")

    params = {}
    for name, shape in shapes.items():
        entry = raw_params[name]
        try:
            declared = tuple(entry["shape"])
            values = np.asarray(entry["values"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFileError(f"{path}: parameter {name} unreadable ({e})")
        if declared != tuple(shape) or values.size != int(np.prod(shape)):
            raise ModelFileError(f"{path}: parameter {name} has shape {declared}, expected {tuple(shape)}")
        if not np.all(np.isfinite(values)):
            raise ModelFileError(f"{path}: parameter {name} holds non-finite values")
        params[name] = values.reshape(shape)

    return ForecastModel(config=config, params=params, normalizer=normalizer, seed=seed)
