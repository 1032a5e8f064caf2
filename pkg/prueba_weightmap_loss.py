#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Pruebas del mapa de pesos de borde y de la entropía cruzada ponderada.
"""

import math
import numpy as np
import pytest
from helpers.error_handler import ConfigError, DatosError
from helpers.gradcheck import ejecutar_suite
from helpers.tensor_core import softmax2
from helpers.weightmap_loss import (
    LossParams, boundary_pixels, distancia_cuadrada, distance_transform, weight_map, weighted_cross_entropy
)


def _borde_fuerza_bruta(mask):
    H, W = mask.shape
    borde = np.zeros((H, W), dtype=bool)
    for y in range(H):
        for x in range(W):
            for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                yy, xx = y + dy, x + dx
                if 0 <= yy < H and 0 <= xx < W and mask[yy, xx] != mask[y, x]:
                    borde[y, x] = True
    return borde


def _d2_fuerza_bruta(borde):
    coords = np.argwhere(borde)
    filas, columnas = np.indices(borde.shape)
    d2 = (filas[..., None] - coords[:, 0]) ** 2 + (columnas[..., None] - coords[:, 1]) ** 2
    return d2.min(axis=-1)


def prueba_distancia_exacta_contra_fuerza_bruta():
    rng = np.random.default_rng(0)
    for _ in range(100):
        mask = (rng.random((32, 32)) < rng.uniform(0.05, 0.6)).astype(np.uint8)
        borde = boundary_pixels(mask)
        if not borde.any():
            continue
        esperado = _d2_fuerza_bruta(borde)
        np.testing.assert_array_equal(distancia_cuadrada(borde), esperado)
        np.testing.assert_allclose(distance_transform(borde, 32, 32), np.sqrt(esperado), rtol=0, atol=1e-12)


def prueba_borde_de_dos_lados():
    rng = np.random.default_rng(1)
    for _ in range(20):
        mask = (rng.random((12, 9)) < 0.4).astype(np.uint8)
        np.testing.assert_array_equal(boundary_pixels(mask), _borde_fuerza_bruta(mask))
    punto = np.zeros((5, 5), dtype=np.uint8)
    punto[2, 2] = 1
    assert boundary_pixels(punto).sum() == 5


def prueba_exterior_de_la_imagen():
    lleno = np.ones((4, 5), dtype=np.uint8)
    assert not boundary_pixels(lleno).any()
    marco = boundary_pixels(lleno, exterior_fondo=True)
    assert marco.sum() == 4 * 5 - 2 * 3


def prueba_distancia_con_coordenadas():
    coords = [(0, 0), (3, 4)]
    mapa = np.zeros((5, 6), dtype=bool)
    mapa[0, 0] = mapa[3, 4] = True
    np.testing.assert_array_equal(distance_transform(coords, 5, 6), distance_transform(mapa, 5, 6))
    assert distance_transform(coords, 5, 6)[1, 1] == math.sqrt(2)
    with pytest.raises(DatosError):
        distancia_cuadrada(np.zeros((3, 3), dtype=bool))


def prueba_pesos_en_el_borde_y_a_2_sigma_cuadrado():
    params = LossParams()
    distancia = int(2 * params.sigma ** 2)
    mask = np.zeros((3, distancia + 100), dtype=np.uint8)
    mask[:, 0] = 1
    w = weight_map(mask, params).weights
    assert abs(w[1, 0] - 21.0) < 1e-12
    assert abs(w[1, 1] - 21.0) < 1e-12
    # El borde del fondo está en la columna 1
    assert abs(w[1, 1 + distancia] - (1.0 + 20.0 * math.exp(-1.0))) < 1e-12
    assert np.all((w >= 1.0) & (w <= 21.0))


def prueba_pesos_sin_borde_son_uno():
    for mask in (np.zeros((6, 7), dtype=np.uint8), np.ones((6, 7), dtype=np.uint8)):
        wm = weight_map(mask)
        np.testing.assert_array_equal(wm.weights, np.ones((6, 7)))
        assert (wm.height, wm.width) == (6, 7)


def prueba_distancia_cuadrada_opcional():
    mask = np.zeros((1, 8), dtype=np.uint8)
    mask[0, 0] = 1
    params = LossParams(w0=10.0, sigma=2.0, squared_distance=True)
    w = weight_map(mask, params).weights
    assert abs(w[0, 4] - (1.0 + 10.0 * math.exp(-9.0 / 8.0))) < 1e-12
    lineal = weight_map(mask, LossParams(w0=10.0, sigma=2.0)).weights
    assert abs(lineal[0, 4] - (1.0 + 10.0 * math.exp(-3.0 / 8.0))) < 1e-12


def prueba_parametros_invalidos():
    with pytest.raises(ConfigError):
        LossParams(sigma=0.0)
    with pytest.raises(ConfigError):
        LossParams(w0=-1.0)


def prueba_entropia_ponderada():
    rng = np.random.default_rng(2)
    logits = rng.standard_normal((2, 4, 5))
    probs = softmax2(logits)
    objetivo = (rng.random((4, 5)) > 0.5).astype(np.uint8)
    pesos = 1.0 + rng.random((4, 5))
    r = weighted_cross_entropy(probs, objetivo, pesos)

    esperado = 0.0
    for y in range(4):
        for x in range(5):
            esperado -= pesos[y, x] * math.log(probs[objetivo[y, x], y, x])
    assert abs(r.perdida - esperado) < 1e-12
    assert abs(r.perdida_media - esperado / 20) < 1e-12
    np.testing.assert_allclose(r.grad_logits.sum(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(r.grad_logits[1], pesos * (probs[1] - objetivo), atol=1e-15)


def prueba_entropia_probabilidad_cero_acotada():
    probs = np.zeros((2, 1, 1))
    probs[0] = 1.0
    r = weighted_cross_entropy(probs, np.ones((1, 1), dtype=np.uint8), np.full((1, 1), 2.0))
    assert math.isfinite(r.perdida)
    assert abs(r.perdida - 2.0 * -math.log(1e-12)) < 1e-9


def prueba_entropia_errores():
    with pytest.raises(ConfigError):
        weighted_cross_entropy(np.full((2, 3, 3), 0.5), np.zeros((3, 4), dtype=np.uint8), np.ones((3, 4)))
    with pytest.raises(DatosError):
        weighted_cross_entropy(np.full((2, 2, 2), 0.5), np.full((2, 2), 2), np.ones((2, 2)))


def prueba_gradiente_de_la_perdida():
    (resultado,) = ejecutar_suite(semilla=4, operaciones=["weighted_cross_entropy"])
    assert resultado.aprobado
