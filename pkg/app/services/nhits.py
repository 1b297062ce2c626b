"""
Trojan Hunt Lab - Mini N-HiTS (forward / reverse-mode)

Tudo em unidades normalizadas e layout canal-major [B x 3 x L].
Por stack: max-pooling por canal -> flatten -> MLP (ReLU) -> coeficientes
de backcast/forecast -> interpolacao linear -> residuo r_{s+1} = r_s - backcast.
A previsao total e a soma das previsoes das stacks.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.models.forecast_model import ForecastModel, expected_param_shapes


@lru_cache(maxsize=None)
def interpolation_matrix(n_coeffs: int, length: int) -> np.ndarray:
    """
    Matriz [length x n_coeffs] da interpolacao linear entre nos uniformes
    (incluindo as pontas). n_coeffs == length -> identidade.
    """
    matrix = np.zeros((length, n_coeffs), dtype=np.float64)
    if n_coeffs == 1:
        matrix[:, 0] = 1.0
    else:
        positions = np.arange(length, dtype=np.float64) * ((n_coeffs - 1) / (length - 1))
        lower = np.clip(np.floor(positions).astype(np.int64), 0, n_coeffs - 2)
        frac = positions - lower
        rows = np.arange(length)
        matrix[rows, lower] = 1.0 - frac
        matrix[rows, lower + 1] += frac
    matrix.setflags(write=False)
    return matrix


def max_pool(residual: np.ndarray, kernel: int) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Janelas nao sobrepostas (a ultima pode ser parcial); empate -> primeiro indice"""
    if kernel == 1:
        return residual, None
    batch, channels, length = residual.shape
    n_windows = -(-length // kernel)
    pad = n_windows * kernel - length
    if pad:
        filler = np.full((batch, channels, pad), -np.inf)
        residual = np.concatenate([residual, filler], axis=2)
    windows = residual.reshape(batch, channels, n_windows, kernel)
    arg = windows.argmax(axis=3)
    pooled = np.take_along_axis(windows, arg[..., None], axis=3)[..., 0]
    index = arg + np.arange(n_windows, dtype=np.int64) * kernel
    return pooled, index


def unpool(grad_pooled: np.ndarray, index: Optional[np.ndarray], length: int) -> np.ndarray:
    if index is None:
        return grad_pooled
    out = np.zeros(grad_pooled.shape[:2] + (length,), dtype=np.float64)
    np.put_along_axis(out, index, grad_pooled, axis=2)
    return out


@dataclass
class StackTrace:
    residual: np.ndarray
    pooled: np.ndarray
    pool_index: Optional[np.ndarray]
    activations: List[np.ndarray]  # h_0 (entrada achatada) .. h_D
    pre_activations: List[np.ndarray]  # z_1 .. z_D


@dataclass
class ForwardTrace:
    stacks: List[StackTrace]


def init_params(model_config, seed: int) -> Dict[str, np.ndarray]:
    """Uniforme em [-1/sqrt(fan_in), 1/sqrt(fan_in)], bias zero"""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in expected_param_shapes(model_config).items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape, dtype=np.float64)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def forward_normalized(model: ForecastModel, xn: np.ndarray) -> Tuple[np.ndarray, ForwardTrace]:
    cfg = model.config
    params = model.params
    batch = xn.shape[0]
    C, H, n_ch = cfg.context_length, cfg.horizon, cfg.n_channels

    residual = xn
    total = np.zeros((batch, n_ch, H), dtype=np.float64)
    traces = []
    for s, stack in enumerate(cfg.stacks):
        pooled, index = max_pool(residual, stack.pool_kernel)
        h = pooled.reshape(batch, -1)
        activations = [h]
        pre_activations = []
        for layer in range(stack.hidden_depth):
            z = h @ params[f"s{s}.hidden{layer}.weight"] + params[f"s{s}.hidden{layer}.bias"]
            h = np.maximum(z, 0.0)
            pre_activations.append(z)
            activations.append(h)

        theta_b = h @ params[f"s{s}.backcast.weight"] + params[f"s{s}.backcast.bias"]
        theta_f = h @ params[f"s{s}.forecast.weight"] + params[f"s{s}.forecast.bias"]
        backcast = theta_b.reshape(batch, n_ch, stack.n_coeffs_backcast) @ interpolation_matrix(stack.n_coeffs_backcast, C).T
        forecast = theta_f.reshape(batch, n_ch, stack.n_coeffs_forecast) @ interpolation_matrix(stack.n_coeffs_forecast, H).T

        traces.append(StackTrace(residual, pooled, index, activations, pre_activations))
        total = total + forecast
        residual = residual - backcast
    return total, ForwardTrace(stacks=traces)


def backward_normalized(
    model: ForecastModel,
    trace: ForwardTrace,
    grad_output: np.ndarray,
    with_params: bool = True,
) -> Tuple[np.ndarray, Optional[Dict[str, np.ndarray]]]:
    """
    VJP da previsao normalizada: recebe dL/dy [B x 3 x H], devolve dL/dx
    [B x 3 x C] e, se pedido, os gradientes dos parametros.
    """
    cfg = model.config
    params = model.params
    batch = grad_output.shape[0]
    C, H, n_ch = cfg.context_length, cfg.horizon, cfg.n_channels

    grads: Optional[Dict[str, np.ndarray]] = {} if with_params else None
    grad_residual = np.zeros((batch, n_ch, C), dtype=np.float64)  # dL/dr apos a ultima stack

    for s in reversed(range(len(cfg.stacks))):
        stack = cfg.stacks[s]
        st = trace.stacks[s]
        grad_backcast = -grad_residual
        grad_theta_f = (grad_output @ interpolation_matrix(stack.n_coeffs_forecast, H)).reshape(batch, -1)
        grad_theta_b = (grad_backcast @ interpolation_matrix(stack.n_coeffs_backcast, C)).reshape(batch, -1)

        h = st.activations[-1]
        w_f = params[f"s{s}.forecast.weight"]
        w_b = params[f"s{s}.backcast.weight"]
        if grads is not None:
            grads[f"s{s}.forecast.weight"] = h.T @ grad_theta_f
            grads[f"s{s}.forecast.bias"] = grad_theta_f.sum(axis=0)
            grads[f"s{s}.backcast.weight"] = h.T @ grad_theta_b
            grads[f"s{s}.backcast.bias"] = grad_theta_b.sum(axis=0)
        grad_h = grad_theta_f @ w_f.T + grad_theta_b @ w_b.T

        for layer in reversed(range(stack.hidden_depth)):
            grad_z = grad_h * (st.pre_activations[layer] > 0)
            weight = params[f"s{s}.hidden{layer}.weight"]
            if grads is not None:
                grads[f"s{s}.hidden{layer}.weight"] = st.activations[layer].T @ grad_z
                grads[f"s{s}.hidden{layer}.bias"] = grad_z.sum(axis=0)
            grad_h = grad_z @ weight.T

        grad_pooled = grad_h.reshape(st.pooled.shape)
        grad_residual = grad_residual + unpool(grad_pooled, st.pool_index, C)

    return grad_residual, grads
