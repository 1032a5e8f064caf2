#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Suite de verificación de gradientes por diferencias finitas centrales.
Cada operación diferenciable se evalúa sobre formas pequeñas y aleatorias
en 64 bits con una pérdida escalar L = Σ salida·R (R aleatoria), y se
reporta el máximo error relativo entre el gradiente analítico y el numérico.
"""

from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Mapping, Optional, Sequence
import numpy as np
from config import GRADCHECK_STEP, GRADCHECK_TOLERANCE
from helpers import net3d2d, tensor_core
from helpers.error_handler import InternoError
from helpers.logger import Logger, log_metrica
from helpers.net3d2d import NetworkConfig
from helpers.tensor_core import BatchNormState, ConvSpec
from helpers.weightmap_loss import weighted_cross_entropy

logger = Logger.get_logger()

# Piso del denominador del error relativo
PISO_RELATIVO = 1e-4
MAX_ENTRADAS = 24


@dataclass
class ResultadoGradiente:
    operacion: str
    error_maximo: float
    tolerancia: float

    @property
    def aprobado(self) -> bool:
        return bool(self.error_maximo <= self.tolerancia)


def error_relativo(analitico, numerico) -> float:
    a = np.asarray(analitico, dtype=np.float64).reshape(-1)
    n = np.asarray(numerico, dtype=np.float64).reshape(-1)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), PISO_RELATIVO)))


def _muestra(rng: np.random.Generator, tamano: int, maximo: int = MAX_ENTRADAS) -> np.ndarray:
    if tamano <= maximo:
        return np.arange(tamano)
    return np.sort(rng.choice(tamano, size=maximo, replace=False))


def gradiente_numerico(f: Callable[[], float], x: np.ndarray, indices: Sequence[int],
                       h: float = GRADCHECK_STEP) -> np.ndarray:
    """
    Diferencias centrales de f respecto a las entradas `indices` de x.
    x se perturba en el lugar y se restaura.
    """
    plano = x.reshape(-1)
    if not np.shares_memory(plano, x):
        raise InternoError("gradiente_numerico requiere un arreglo contiguo")
    resultado = np.empty(len(indices))
    for n, i in enumerate(indices):
        original = plano[i]
        plano[i] = original + h
        mas = f()
        plano[i] = original - h
        menos = f()
        plano[i] = original
        resultado[n] = (mas - menos) / (2.0 * h)
    return resultado


def _comparar(rng, f, pares) -> float:
    """pares: lista de (arreglo, gradiente analítico completo)."""
    peor = 0.0
    for x, analitico in pares:
        indices = _muestra(rng, x.size)
        numerico = gradiente_numerico(f, x, indices)
        peor = max(peor, error_relativo(np.asarray(analitico).reshape(-1)[indices], numerico))
    return peor


# ---------------------------------------------------------------------------
# Verificaciones por operación
# ---------------------------------------------------------------------------

def _verificar_conv(rng, ops, forma_x, spec: ConvSpec) -> float:
    conv_forward = ops.get("conv_forward", tensor_core.conv_forward)
    conv_backward = ops.get("conv_backward", tensor_core.conv_backward)
    x = rng.standard_normal(forma_x)
    w = rng.standard_normal(spec.forma_pesos)
    b = rng.standard_normal(spec.out_channels)
    R = rng.standard_normal(conv_forward(x, spec, w, b).shape)

    def f():
        return float(np.sum(conv_forward(x, spec, w, b) * R))

    gx, gw, gb = conv_backward(R, x, spec, w)
    return _comparar(rng, f, [(x, gx), (w, gw), (b, gb)])


def verificar_conv2d(rng, ops) -> float:
    return _verificar_conv(rng, ops, (2, 5, 6), ConvSpec((3, 3), (1, 1), (1, 1), 2, 3))


def verificar_conv3d(rng, ops) -> float:
    return _verificar_conv(rng, ops, (2, 5, 4, 5), ConvSpec((3, 3, 3), (1, 1, 1), (1, 1, 0), 2, 3))


def verificar_deconv(rng, ops) -> float:
    forward = ops.get("deconv2d_forward", tensor_core.deconv2d_forward)
    backward = ops.get("deconv2d_backward", tensor_core.deconv2d_backward)
    x = rng.standard_normal((2, 3, 4))
    w = rng.standard_normal((2, 3, 4, 4))
    b = rng.standard_normal(3)
    R = rng.standard_normal(forward(x, w, b).shape)

    def f():
        return float(np.sum(forward(x, w, b) * R))

    gx, gw, gb = backward(R, x, w)
    return _comparar(rng, f, [(x, gx), (w, gw), (b, gb)])


def verificar_maxpool(rng, ops) -> float:
    forward = ops.get("maxpool_spatial_forward", tensor_core.maxpool_spatial_forward)
    backward = ops.get("maxpool_spatial_backward", tensor_core.maxpool_spatial_backward)
    # Valores bien separados para que la perturbación no cambie el argmax
    x = rng.permutation(2 * 4 * 6 * 3).reshape(2, 4, 6, 3).astype(np.float64) * 0.1
    salida, indices = forward(x)
    R = rng.standard_normal(salida.shape)

    def f():
        return float(np.sum(forward(x)[0] * R))

    return _comparar(rng, f, [(x, backward(R, indices, x.shape))])


def verificar_batchnorm(rng, ops) -> float:
    forward = ops.get("batchnorm", tensor_core.batchnorm)
    backward = ops.get("batchnorm_backward", tensor_core.batchnorm_backward)
    x = rng.standard_normal((3, 4, 5))
    estado = BatchNormState.nuevo(3)
    gamma = rng.standard_normal(3)
    beta = rng.standard_normal(3)
    R = rng.standard_normal(x.shape)

    def f():
        return float(np.sum(forward(x, replace(estado, gamma=gamma, beta=beta))[0] * R))

    _, _, cache = forward(x, replace(estado, gamma=gamma, beta=beta))
    gx, gg, gb = backward(R, cache)
    return _comparar(rng, f, [(x, gx), (gamma, gg), (beta, gb)])


def verificar_relu(rng, ops) -> float:
    relu = ops.get("relu", tensor_core.relu)
    backward = ops.get("relu_backward", tensor_core.relu_backward)
    x = rng.standard_normal((3, 5, 5))
    # Lejos del quiebre en 0
    x = np.where(np.abs(x) < 1e-3, 0.5, x)
    R = rng.standard_normal(x.shape)

    def f():
        return float(np.sum(relu(x) * R))

    return _comparar(rng, f, [(x, backward(R, x))])


def verificar_dropout(rng, ops) -> float:
    dropout = ops.get("dropout", tensor_core.dropout)
    backward = ops.get("dropout_backward", tensor_core.dropout_backward)
    x = rng.standard_normal((3, 4, 4))
    R = rng.standard_normal(x.shape)

    def f():
        return float(np.sum(dropout(x, 0.5, "train", 7)[0] * R))

    _, mascara = dropout(x, 0.5, "train", 7)
    return _comparar(rng, f, [(x, backward(R, mascara))])


def verificar_crop_concat(rng, ops) -> float:
    forward = ops.get("crop_concat", net3d2d.crop_concat)
    backward = ops.get("crop_concat_backward", net3d2d.crop_concat_backward)
    dec = rng.standard_normal((2, 4, 4))
    enc = rng.standard_normal((3, 7, 6))
    R = rng.standard_normal((5, 4, 4))

    def f():
        return float(np.sum(forward(dec, enc) * R))

    gd, ge = backward(R, 2, enc.shape)
    return _comparar(rng, f, [(dec, gd), (enc, ge)])


def verificar_depth_collapse(rng, ops) -> float:
    forward = ops.get("depth_collapse", net3d2d.depth_collapse)
    backward = ops.get("depth_collapse_backward", net3d2d.depth_collapse_backward)
    x = rng.standard_normal((2, 3, 3, 4))
    R = rng.standard_normal((2, 3, 3))

    def f():
        return float(np.sum(forward(x) * R))

    return _comparar(rng, f, [(x, backward(R, x.shape[-1]))])


def verificar_entropia_ponderada(rng, ops) -> float:
    softmax2 = ops.get("softmax2", tensor_core.softmax2)
    perdida = ops.get("weighted_cross_entropy", weighted_cross_entropy)
    logits = rng.standard_normal((2, 5, 6)) * 2.0
    objetivo = (rng.random((5, 6)) > 0.5).astype(np.uint8)
    pesos = 1.0 + 20.0 * rng.random((5, 6))

    def f():
        return perdida(softmax2(logits), objetivo, pesos).perdida

    return _comparar(rng, f, [(logits, perdida(softmax2(logits), objetivo, pesos).grad_logits)])


CONFIG_RED_MINIMA = NetworkConfig(input_height=8, input_width=8, input_depth=5, stages=1,
                                  channels=(2, 4), convs_per_stage=2, dropout_p=0.5, dtype="float64")


def verificar_red_completa(rng, ops) -> float:
    """Red completa 8×8×5, S=1: gradientes de todos los parámetros y de la entrada."""
    params = net3d2d.build(CONFIG_RED_MINIMA, seed=int(rng.integers(1 << 30)))
    volumen = rng.standard_normal((1, 8, 8, 5))
    objetivo = (rng.random((8, 8)) > 0.5).astype(np.uint8)
    pesos = 1.0 + 20.0 * rng.random((8, 8))

    def f():
        probs = net3d2d.forward(params, volumen, "train", seed=3, actualizar_estadisticas=False)
        return weighted_cross_entropy(probs, objetivo, pesos).perdida

    cache: Dict = {}
    probs = net3d2d.forward(params, volumen, "train", seed=3, cache=cache, actualizar_estadisticas=False)
    params.zero_grad()
    grad_volumen = net3d2d.backward(params, cache, weighted_cross_entropy(probs, objetivo, pesos).grad_logits)
    pares = [(t.data, t.grad.copy()) for t in params.parametros.values()]
    pares.append((volumen, grad_volumen))
    return _comparar(rng, f, pares)


OPERACIONES: Dict[str, Callable] = {
    "conv2d": verificar_conv2d,
    "conv3d": verificar_conv3d,
    "deconv2d": verificar_deconv,
    "maxpool_spatial": verificar_maxpool,
    "batchnorm": verificar_batchnorm,
    "relu": verificar_relu,
    "dropout": verificar_dropout,
    "crop_concat": verificar_crop_concat,
    "depth_collapse": verificar_depth_collapse,
    "weighted_cross_entropy": verificar_entropia_ponderada,
    "red_completa": verificar_red_completa,
}


def ejecutar_suite(semilla: int = 0, ops: Optional[Mapping[str, Callable]] = None,
                   tolerancia: float = GRADCHECK_TOLERANCE,
                   operaciones: Optional[Sequence[str]] = None) -> List[ResultadoGradiente]:
    """
    Ejecuta las verificaciones de gradiente.

    Args:
        semilla (int): Semilla de las entradas aleatorias
        ops (dict, optional): Sustitución de implementaciones por nombre de función
        tolerancia (float): Error relativo máximo admitido
        operaciones: Subconjunto de operaciones (por defecto todas)

    Returns:
        list: Un ResultadoGradiente por operación, en orden de registro
    """
    ops = dict(ops or {})
    resultados = []
    for nombre in operaciones or OPERACIONES:
        rng = np.random.default_rng([semilla, len(resultados)])
        error = OPERACIONES[nombre](rng, ops)
        resultados.append(ResultadoGradiente(nombre, error, tolerancia))
        log_metrica(f"gradcheck.{nombre}", error, {"tolerancia": tolerancia})
    return resultados


def peor_resultado(resultados: Sequence[ResultadoGradiente]) -> ResultadoGradiente:
    return max(resultados, key=lambda r: r.error_maximo)
