#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Mapa de pesos de borde y entropía cruzada ponderada.
El mapa magnifica la pérdida cerca de los bordes del órgano con
w(x) = 1 + w0·exp(−d(x)/(2σ²)), donde d(x) es la distancia euclidiana exacta
al borde más cercano.
"""

from dataclasses import dataclass
from typing import NamedTuple, Union
import numpy as np
from scipy import ndimage as ndi
from config import LOSS_W0, LOSS_SIGMA, LOSS_PROB_CLAMP
from helpers.error_handler import ConfigError, DatosError
from helpers.logger import Logger

logger = Logger.get_logger()

# Vecindad 4-conexa
_CRUZ = ndi.generate_binary_structure(rank=2, connectivity=1)


@dataclass(frozen=True)
class LossParams:
    """Parámetros del mapa de pesos."""

    w0: float = LOSS_W0
    sigma: float = LOSS_SIGMA
    # Usa d(x)² en el exponente en lugar de d(x)
    squared_distance: bool = False

    def __post_init__(self):
        if self.w0 < 0:
            raise ConfigError("w0 debe ser no negativo", {"w0": self.w0})
        if self.sigma <= 0:
            raise ConfigError("sigma debe ser positivo", {"sigma": self.sigma})


@dataclass
class WeightMap:
    weights: np.ndarray

    @property
    def height(self) -> int:
        return int(self.weights.shape[0])

    @property
    def width(self) -> int:
        return int(self.weights.shape[1])


class ResultadoPerdida(NamedTuple):
    perdida: float
    grad_logits: np.ndarray
    perdida_media: float


def _mascara_binaria(mask) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ConfigError("Se esperaba una máscara 2D", {"forma": m.shape})
    if not np.all((m == 0) | (m == 1)):
        raise DatosError("La máscara debe ser estrictamente 0/1")
    return m.astype(bool)


def boundary_pixels(mask, exterior_fondo: bool = False) -> np.ndarray:
    """
    Borde de dos lados: primer plano con un vecino 4-conexo de fondo, o
    fondo con un vecino 4-conexo de primer plano.

    Args:
        mask: Máscara binaria H×W
        exterior_fondo (bool): Tratar el exterior de la imagen como fondo

    Returns:
        numpy.ndarray: Mapa booleano H×W del conjunto de borde
    """
    fg = _mascara_binaria(mask)
    # border_value=1 hace que el exterior no erosione el primer plano
    interior = ndi.binary_erosion(fg, structure=_CRUZ, border_value=0 if exterior_fondo else 1)
    borde_fg = fg & ~interior
    borde_bg = ~fg & ndi.binary_dilation(fg, structure=_CRUZ)
    return borde_fg | borde_bg


def distancia_cuadrada(boundary) -> np.ndarray:
    """
    Distancia euclidiana al cuadrado (entera y exacta) al píxel de borde más cercano.

    Args:
        boundary: Mapa booleano H×W no vacío

    Returns:
        numpy.ndarray: Enteros int64 H×W
    """
    b = np.asarray(boundary, dtype=bool)
    if not b.any():
        raise DatosError("El conjunto de borde está vacío", {"forma": b.shape})
    # Los índices del vecino más cercano permiten recomputar d² en enteros
    _, indices = ndi.distance_transform_edt(~b, return_distances=True, return_indices=True)
    filas, columnas = np.indices(b.shape)
    return ((filas - indices[0]).astype(np.int64) ** 2 +
            (columnas - indices[1]).astype(np.int64) ** 2)


def distance_transform(boundary, H: int, W: int) -> np.ndarray:
    """
    Transformada de distancia euclidiana exacta.

    Args:
        boundary: Mapa booleano del borde, o iterable de coordenadas (fila, columna)
        H (int): Alto
        W (int): Ancho

    Returns:
        numpy.ndarray: Distancias float64 H×W
    """
    b = np.asarray(boundary)
    if b.shape != (H, W) or b.dtype != bool:
        mapa = np.zeros((H, W), dtype=bool)
        coords = np.asarray(list(boundary), dtype=np.int64).reshape(-1, 2)
        mapa[coords[:, 0], coords[:, 1]] = True
        b = mapa
    return np.sqrt(distancia_cuadrada(b).astype(np.float64))


def weight_map(mask, params: LossParams = LossParams()) -> WeightMap:
    """
    Calcula el mapa de pesos de una rebanada.

    Args:
        mask: Máscara binaria H×W
        params (LossParams): w0, sigma y forma del exponente

    Returns:
        WeightMap: Pesos en [1, 1 + w0]
    """
    borde = boundary_pixels(mask)
    if not borde.any():
        logger.debug("Rebanada sin borde: mapa de pesos uniforme", extra={"detalles": {"forma": borde.shape}})
        return WeightMap(np.ones(borde.shape, dtype=np.float64))

    d2 = distancia_cuadrada(borde).astype(np.float64)
    d = d2 if params.squared_distance else np.sqrt(d2)
    pesos = 1.0 + params.w0 * np.exp(-d / (2.0 * params.sigma ** 2))
    return WeightMap(pesos)


def weighted_cross_entropy(probs, target, wmap: Union[WeightMap, np.ndarray]) -> ResultadoPerdida:
    """
    Entropía cruzada ponderada fusionada con softmax.

    Args:
        probs: Probabilidades [2, H, W] de softmax2
        target: Máscara binaria H×W con la clase verdadera
        wmap: Mapa de pesos H×W

    Returns:
        ResultadoPerdida: suma, gradiente respecto a los logits y media por píxel
    """
    p = np.asarray(probs)
    t = _mascara_binaria(target)
    w = wmap.weights if isinstance(wmap, WeightMap) else np.asarray(wmap)
    if p.shape[0] != 2 or p.shape[1:] != t.shape or w.shape != t.shape:
        raise ConfigError("Formas incompatibles en la pérdida",
                          {"probs": p.shape, "target": t.shape, "pesos": w.shape})

    clase = t.astype(np.int64)
    p_c = np.take_along_axis(p, clase[None], axis=0)[0]
    perdida = float(-np.sum(w * np.log(np.maximum(p_c, LOSS_PROB_CLAMP))))

    onehot = np.stack([~t, t]).astype(p.dtype)
    grad = w[None] * (p - onehot)
    return ResultadoPerdida(perdida, grad, perdida / t.size)
