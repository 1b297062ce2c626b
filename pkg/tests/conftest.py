"""
Fixtures compartilhadas: configs pequenas, series sinteticas curtas e o
helper de margem para diferencas finitas.
"""
import numpy as np
import pytest

from app.models.telemetry import Normalizer, TelemetrySeries
from app.schemas.forecaster import ModelConfig, StackConfig
from app.schemas.telemetry import SynthConfig
from app.services import nhits
from app.services.forecaster import init_model
from app.services.telemetry import generate_synthetic


def tiny_config(context_length: int = 16, width: int = 8) -> ModelConfig:
    return ModelConfig(
        context_length=context_length,
        horizon=75,
        stacks=[
            StackConfig(pool_kernel=4, n_coeffs_forecast=2, n_coeffs_backcast=4, hidden_width=width, hidden_depth=2),
            StackConfig(pool_kernel=3, n_coeffs_forecast=3, n_coeffs_backcast=5, hidden_width=width, hidden_depth=1),
            StackConfig(pool_kernel=1, n_coeffs_forecast=75, n_coeffs_backcast=context_length, hidden_width=width, hidden_depth=1),
        ],
    )


def trigger_config(context_length: int = 160, width: int = 8) -> ModelConfig:
    """Horizonte 75: o menor modelo compativel com o alinhamento canonico"""
    return ModelConfig(
        context_length=context_length,
        horizon=75,
        stacks=[
            StackConfig(pool_kernel=8, n_coeffs_forecast=10, n_coeffs_backcast=20, hidden_width=width, hidden_depth=1),
            StackConfig(pool_kernel=1, n_coeffs_forecast=75, n_coeffs_backcast=40, hidden_width=width, hidden_depth=1),
        ],
    )


def random_normalizer(rng: np.random.Generator) -> Normalizer:
    return Normalizer(mean=rng.normal(0.0, 1.0, 3), std=rng.uniform(0.5, 2.0, 3))


def randomize_biases(model, rng: np.random.Generator, scale: float = 0.1):
    """Bias zero deixa muitas pre-ativacoes perto da dobra da ReLU"""
    for name, value in model.params.items():
        if name.endswith(".bias"):
            value[...] = rng.normal(0.0, scale, value.shape)
    return model


def smoothness_margin(model, contexts_n: np.ndarray) -> float:
    """
    Menor distancia ate uma dobra (pre-ativacao da ReLU em 0 ou empate no
    max-pooling) para um lote normalizado [B x C x 3].
    """
    _, trace = nhits.forward_normalized(model, np.ascontiguousarray(contexts_n.transpose(0, 2, 1)))
    margin = np.inf
    for stack, st in zip(model.config.stacks, trace.stacks):
        for z in st.pre_activations:
            margin = min(margin, float(np.min(np.abs(z))))
        k = stack.pool_kernel
        if k == 1:
            continue
        residual = st.residual
        length = residual.shape[2]
        for begin in range(0, length, k):
            window = residual[:, :, begin:begin + k]
            if window.shape[2] < 2:
                continue
            top = np.sort(window, axis=2)
            margin = min(margin, float(np.min(top[:, :, -1] - top[:, :, -2])))
    return margin


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_model():
    return init_model(tiny_config(), seed=3, normalizer=Normalizer(mean=np.array([0.5, -1.0, 2.0]), std=np.array([1.5, 0.7, 1.1])))


@pytest.fixture(scope="session")
def short_series() -> TelemetrySeries:
    return generate_synthetic(SynthConfig(length=3000, seed=11))


@pytest.fixture
def config_file(tmp_path):
    def write(text: str):
        path = tmp_path / "run.yaml"
        path.write_text(text, encoding="utf-8")
        return path

    return write
