#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Refinamiento con CRF totalmente conectado restringido a la banda de borde.
El CRF solo re-etiqueta los píxeles cercanos al borde de la predicción y
cada píxel solo interactúa con su ventana de (2r+1)×(2r+1) vecinos. Los
vecinos fuera de la banda aportan mensajes como etiquetas congeladas.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple
import numpy as np
from scipy import ndimage as ndi
from config import (
    CRF_W1, CRF_W2, CRF_THETA_ALPHA, CRF_THETA_BETA, CRF_THETA_GAMMA,
    CRF_NEIGHBORHOOD_RADIUS, CRF_BAND_WIDTH, CRF_ITERATIONS, CRF_MAX_BRUTE_FORCE,
    PROB_THRESHOLD, LOSS_PROB_CLAMP
)
from helpers.error_handler import ConfigError
from helpers.logger import Logger
from helpers.weightmap_loss import boundary_pixels

logger = Logger.get_logger()


@dataclass(frozen=True)
class CrfParams:
    """Pesos y anchos de los núcleos, vecindad, banda e iteraciones."""

    w1: float = CRF_W1
    w2: float = CRF_W2
    theta_alpha: float = CRF_THETA_ALPHA
    theta_beta: float = CRF_THETA_BETA
    theta_gamma: float = CRF_THETA_GAMMA
    neighborhood_radius: int = CRF_NEIGHBORHOOD_RADIUS
    band_width: int = CRF_BAND_WIDTH
    iterations: int = CRF_ITERATIONS

    def __post_init__(self):
        fallidas = []
        if min(self.theta_alpha, self.theta_beta, self.theta_gamma) <= 0:
            fallidas.append("todos los theta deben ser positivos")
        if self.w1 < 0 or self.w2 < 0:
            fallidas.append("w1 y w2 deben ser no negativos")
        if self.neighborhood_radius < 1:
            fallidas.append("neighborhood_radius >= 1")
        if self.band_width < 0:
            fallidas.append("band_width >= 0")
        if self.iterations < 1:
            fallidas.append("iterations >= 1")
        if fallidas:
            raise ConfigError("Parámetros de CRF inválidos", {"restricciones": fallidas})


@dataclass
class CrfInstance:
    """
    Grafo de la banda: píxeles ordenados con sus unarios (−log P) e
    intensidades, más los vecinos congelados fuera de la banda.
    """

    pixels: np.ndarray
    unary: np.ndarray
    intensities: np.ndarray
    frozen_pixels: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    frozen_labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    frozen_intensities: np.ndarray = field(default_factory=lambda: np.zeros(0))
    neighborhood_radius: int = CRF_NEIGHBORHOOD_RADIUS

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.int64).reshape(-1, 2)
        self.unary = np.asarray(self.unary, dtype=np.float64).reshape(-1, 2)
        self.intensities = np.asarray(self.intensities, dtype=np.float64).reshape(-1)
        self.frozen_pixels = np.asarray(self.frozen_pixels, dtype=np.int64).reshape(-1, 2)
        self.frozen_labels = np.asarray(self.frozen_labels, dtype=np.int64).reshape(-1)
        self.frozen_intensities = np.asarray(self.frozen_intensities, dtype=np.float64).reshape(-1)
        n, m = len(self.pixels), len(self.frozen_pixels)
        if len(self.unary) != n or len(self.intensities) != n:
            raise ConfigError("unary e intensities deben tener una fila por píxel",
                              {"pixeles": n, "unary": len(self.unary), "intensities": len(self.intensities)})
        if len(self.frozen_labels) != m or len(self.frozen_intensities) != m:
            raise ConfigError("Los vecinos congelados requieren etiqueta e intensidad")
        if not np.all(np.isfinite(self.unary)):
            raise ConfigError("Los potenciales unarios deben ser finitos")
        todos = np.concatenate([self.pixels, self.frozen_pixels])
        if len(np.unique(todos, axis=0)) != len(todos):
            raise ConfigError("Coordenadas repetidas en la instancia de CRF")
        self._aristas = None

    @property
    def n(self) -> int:
        return len(self.pixels)

    def aristas(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """
        Pares de la vecindad de Chebyshev de radio r.

        Returns:
            tuple: (i, j) pares internos con j > i, y (i, f) pares con vecinos congelados
        """
        if self._aristas is None:
            self._aristas = _buscar_aristas(self.pixels, self.frozen_pixels, self.neighborhood_radius)
        return self._aristas


def _buscar_aristas(pixels: np.ndarray, congelados: np.ndarray, r: int):
    n = len(pixels)
    vacio = np.zeros(0, dtype=np.int64)
    if n == 0:
        return vacio, vacio, vacio, vacio
    todos = np.concatenate([pixels, congelados])
    origen = todos.min(axis=0) - r
    extension = todos.max(axis=0) - origen + r + 1
    grilla = np.full(tuple(extension), -1, dtype=np.int64)
    locales = todos - origen
    grilla[locales[:, 0], locales[:, 1]] = np.arange(len(todos))

    propios = pixels - origen
    internos_i, internos_j, congelados_i, congelados_f = [], [], [], []
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dy == 0 and dx == 0:
                continue
            vecino = grilla[propios[:, 0] + dy, propios[:, 1] + dx]
            indices = np.arange(n)
            interno = (vecino >= 0) & (vecino < n) & (vecino > indices)
            internos_i.append(indices[interno])
            internos_j.append(vecino[interno])
            externo = vecino >= n
            congelados_i.append(indices[externo])
            congelados_f.append(vecino[externo] - n)
    return (np.concatenate(internos_i), np.concatenate(internos_j),
            np.concatenate(congelados_i), np.concatenate(congelados_f))


def _kernel(d2, dI2, params: CrfParams):
    bilateral = params.w1 * np.exp(-d2 / (2.0 * params.theta_alpha ** 2) - dI2 / (2.0 * params.theta_beta ** 2))
    unilateral = params.w2 * np.exp(-d2 / (2.0 * params.theta_gamma ** 2))
    return bilateral + unilateral


def pairwise_kernel(pi, pj, Ii: float, Ij: float, params: CrfParams) -> float:
    """
    Núcleo bilateral + unilateral que multiplica a μ(xi, xj) = [xi ≠ xj].

    Args:
        pi, pj: Coordenadas (fila, columna)
        Ii, Ij (float): Intensidades en escala [0, 255]
        params (CrfParams): Parámetros del CRF

    Returns:
        float: Valor del núcleo
    """
    d2 = float(np.sum((np.asarray(pi, dtype=np.float64) - np.asarray(pj, dtype=np.float64)) ** 2))
    return float(_kernel(d2, (float(Ii) - float(Ij)) ** 2, params))


def _pesos_aristas(instance: CrfInstance, params: CrfParams):
    i, j, ci, cf = instance.aristas()
    p, I = instance.pixels, instance.intensities
    k_int = _kernel(np.sum((p[i] - p[j]) ** 2, axis=1).astype(np.float64), (I[i] - I[j]) ** 2, params)
    fp, fI = instance.frozen_pixels, instance.frozen_intensities
    k_cong = _kernel(np.sum((p[ci] - fp[cf]) ** 2, axis=1).astype(np.float64), (I[ci] - fI[cf]) ** 2, params)
    return i, j, k_int, ci, cf, k_cong


def energy(labeling, instance: CrfInstance, params: CrfParams) -> float:
    """
    Energía del etiquetado: unarios más los pares discordantes, contando cada
    par no ordenado una sola vez e incluyendo a los vecinos congelados.

    Args:
        labeling: Etiquetas {0, 1} por píxel de la banda
        instance (CrfInstance): Grafo de la banda
        params (CrfParams): Parámetros del CRF

    Returns:
        float: Energía
    """
    x = np.asarray(labeling, dtype=np.int64).reshape(-1)
    if len(x) != instance.n or np.any((x != 0) & (x != 1)):
        raise ConfigError("El etiquetado debe asignar {0, 1} a cada píxel de la banda",
                          {"pixeles": instance.n, "etiquetas": len(x)})
    i, j, k_int, ci, cf, k_cong = _pesos_aristas(instance, params)
    unario = instance.unary[np.arange(instance.n), x].sum()
    par = np.sum(k_int * (x[i] != x[j])) + np.sum(k_cong * (x[ci] != instance.frozen_labels[cf]))
    return float(unario + par)


def _softmax_filas(negativo: np.ndarray) -> np.ndarray:
    e = np.exp(negativo - negativo.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def mean_field_infer(instance: CrfInstance, params: CrfParams) -> Tuple[np.ndarray, np.ndarray]:
    """
    Inferencia de campo medio con actualización de Jacobi.

    Args:
        instance (CrfInstance): Grafo de la banda
        params (CrfParams): Parámetros del CRF (iterations es un tope fijo)

    Returns:
        tuple: (marginales [n, 2], etiquetas [n])
    """
    n = instance.n
    if n == 0:
        return np.zeros((0, 2)), np.zeros(0, dtype=np.int64)
    i, j, k_int, ci, cf, k_cong = _pesos_aristas(instance, params)

    # Mensaje constante de los congelados: penaliza la etiqueta l si difiere
    congelado = np.zeros((n, 2))
    for l in (0, 1):
        congelado[:, l] = np.bincount(ci, weights=k_cong * (instance.frozen_labels[cf] != l), minlength=n)

    q = _softmax_filas(-instance.unary)
    for _ in range(params.iterations):
        mensaje = congelado.copy()
        for l in (0, 1):
            # Con dos etiquetas, Σ_{l'≠l} Q_j(l') = 1 − Q_j(l)
            otro = 1.0 - q[:, l]
            mensaje[:, l] += np.bincount(i, weights=k_int * otro[j], minlength=n)
            mensaje[:, l] += np.bincount(j, weights=k_int * otro[i], minlength=n)
        q = _softmax_filas(-instance.unary - mensaje)
    return q, np.argmax(q, axis=1)


def _etiquetados(n: int) -> np.ndarray:
    # Orden lexicográfico: el primer píxel es el bit más significativo
    indices = np.arange(2 ** n, dtype=np.int64)
    desplazamientos = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((indices[:, None] >> desplazamientos[None, :]) & 1).astype(np.int8)


def brute_force_map(instance: CrfInstance, params: CrfParams) -> Tuple[np.ndarray, float]:
    """
    Minimizador exacto por enumeración de los 2^n etiquetados.

    Args:
        instance (CrfInstance): Grafo con a lo sumo 20 píxeles
        params (CrfParams): Parámetros del CRF

    Returns:
        tuple: (etiquetas de mínima energía, energía mínima)
    """
    n = instance.n
    if n > CRF_MAX_BRUTE_FORCE:
        raise ConfigError(f"La fuerza bruta admite a lo sumo {CRF_MAX_BRUTE_FORCE} píxeles", {"pixeles": n})
    if n == 0:
        return np.zeros(0, dtype=np.int64), 0.0
    L = _etiquetados(n)
    i, j, k_int, ci, cf, k_cong = _pesos_aristas(instance, params)

    energias = np.zeros(len(L))
    for p in range(n):
        energias += instance.unary[p, L[:, p]]
    for a, b, k in zip(i, j, k_int):
        energias += k * (L[:, a] != L[:, b])
    for a, f, k in zip(ci, cf, k_cong):
        energias += k * (L[:, a] != instance.frozen_labels[f])

    mejor = L[int(np.argmin(energias))].astype(np.int64)
    return mejor, energy(mejor, instance, params)


def boundary_band(prob_map, threshold: float = PROB_THRESHOLD,
                  band_width: int = CRF_BAND_WIDTH) -> np.ndarray:
    """
    Píxeles a distancia de Chebyshev ≤ band_width del borde de dos lados de
    la máscara umbralizada (el exterior de la imagen cuenta como fondo).

    Args:
        prob_map: Probabilidades [2, H, W]
        threshold (float): Umbral sobre la probabilidad del canal 1
        band_width (int): Ancho de la banda en píxeles

    Returns:
        numpy.ndarray: Mapa booleano H×W de la banda
    """
    mascara = np.asarray(prob_map)[1] > threshold
    if not mascara.any():
        return np.zeros(mascara.shape, dtype=bool)
    borde = boundary_pixels(mascara.astype(np.uint8), exterior_fondo=True)
    if band_width == 0:
        return borde
    cuadrado = np.ones((2 * band_width + 1, 2 * band_width + 1), dtype=bool)
    return ndi.binary_dilation(borde, structure=cuadrado)


def reescalar_gris(image_slice) -> np.ndarray:
    """Reescalado min-max de la rebanada a [0, 255]; una rebanada constante queda en 0."""
    x = np.asarray(image_slice, dtype=np.float64)
    minimo, maximo = x.min(), x.max()
    if maximo == minimo:
        return np.zeros_like(x)
    return (x - minimo) * (255.0 / (maximo - minimo))


def construir_instancia(prob_map, image_slice, band, params: CrfParams,
                        threshold: float = PROB_THRESHOLD) -> CrfInstance:
    """
    Construye el grafo de la banda a partir del mapa de probabilidades.

    Args:
        prob_map: Probabilidades [2, H, W]
        image_slice: Intensidades H×W en escala [0, 255]
        band: Mapa booleano de la banda
        params (CrfParams): Parámetros (solo se usa el radio de vecindad)
        threshold (float): Umbral de las etiquetas congeladas

    Returns:
        CrfInstance: Instancia lista para inferencia
    """
    p = np.asarray(prob_map, dtype=np.float64)
    imagen = np.asarray(image_slice, dtype=np.float64)
    banda = np.asarray(band, dtype=bool)
    r = params.neighborhood_radius

    pixels = np.argwhere(banda)
    unary = -np.log(np.maximum(p[:, pixels[:, 0], pixels[:, 1]].T, LOSS_PROB_CLAMP))
    ventana = np.ones((2 * r + 1, 2 * r + 1), dtype=bool)
    anillo = ndi.binary_dilation(banda, structure=ventana) & ~banda
    congelados = np.argwhere(anillo)
    etiquetas = (p[1] > threshold).astype(np.int64)
    return CrfInstance(
        pixels=pixels,
        unary=unary,
        intensities=imagen[pixels[:, 0], pixels[:, 1]],
        frozen_pixels=congelados,
        frozen_labels=etiquetas[congelados[:, 0], congelados[:, 1]],
        frozen_intensities=imagen[congelados[:, 0], congelados[:, 1]],
        neighborhood_radius=r,
    )


def refine(prob_map, image_slice, params: CrfParams = CrfParams(),
           threshold: float = PROB_THRESHOLD, banda: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Refina la máscara umbralizada re-etiquetando solo los píxeles de la banda.

    Args:
        prob_map: Probabilidades [2, H, W]
        image_slice: Intensidades H×W ya reescaladas a [0, 255]
        params (CrfParams): Parámetros del CRF
        threshold (float): Umbral de binarización
        banda (numpy.ndarray, optional): Banda precalculada

    Returns:
        numpy.ndarray: Máscara binaria uint8 H×W
    """
    p = np.asarray(prob_map)
    base = (p[1] > threshold).astype(np.uint8)
    if banda is None:
        banda = boundary_band(p, threshold, params.band_width)
    if not banda.any():
        return base

    instancia = construir_instancia(p, image_slice, banda, params, threshold)
    _, etiquetas = mean_field_infer(instancia, params)
    refinada = base.copy()
    refinada[instancia.pixels[:, 0], instancia.pixels[:, 1]] = etiquetas
    logger.debug("Rebanada refinada con CRF",
                 extra={"detalles": {"pixeles_banda": instancia.n,
                                     "cambios": int(np.sum(refinada != base))}})
    return refinada
