#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Pruebas del refinamiento con CRF: energía contra un oráculo exhaustivo,
inferencia de campo medio, fuerza bruta y restricción a la banda.
"""

import itertools
import math
from dataclasses import replace
import numpy as np
import pytest
from helpers.crf_refine import (
    CrfParams, CrfInstance, pairwise_kernel, energy, mean_field_infer, brute_force_map,
    boundary_band, reescalar_gris, construir_instancia, refine
)
from helpers.error_handler import ConfigError
from helpers.evalkit import dice

PARAMS_PRUEBA = CrfParams(theta_alpha=5.0)


def _nucleo(pa, pb, Ia, Ib, params):
    d2 = (pa[0] - pb[0]) ** 2 + (pa[1] - pb[1]) ** 2
    return (params.w1 * math.exp(-d2 / (2 * params.theta_alpha ** 2) - (Ia - Ib) ** 2 / (2 * params.theta_beta ** 2))
            + params.w2 * math.exp(-d2 / (2 * params.theta_gamma ** 2)))


def _energia_oraculo(x, inst, params):
    r = inst.neighborhood_radius
    total = sum(inst.unary[a, x[a]] for a in range(inst.n))
    for a, b in itertools.combinations(range(inst.n), 2):
        pa, pb = inst.pixels[a], inst.pixels[b]
        if max(abs(pa[0] - pb[0]), abs(pa[1] - pb[1])) <= r and x[a] != x[b]:
            total += _nucleo(pa, pb, inst.intensities[a], inst.intensities[b], params)
    for a in range(inst.n):
        for f in range(len(inst.frozen_pixels)):
            pa, pf = inst.pixels[a], inst.frozen_pixels[f]
            if max(abs(pa[0] - pf[0]), abs(pa[1] - pf[1])) <= r and x[a] != inst.frozen_labels[f]:
                total += _nucleo(pa, pf, inst.intensities[a], inst.frozen_intensities[f], params)
    return total


def _instancia_aleatoria(rng, n_max=12, radio=None):
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(0, 6))
    celdas = rng.choice(36, size=n + m, replace=False)
    coords = np.stack([celdas // 6, celdas % 6], axis=1)
    p1 = rng.uniform(0.05, 0.95, n)
    return CrfInstance(
        pixels=coords[:n],
        unary=-np.log(np.stack([1.0 - p1, p1], axis=1)),
        intensities=rng.uniform(0, 255, n),
        frozen_pixels=coords[n:],
        frozen_labels=rng.integers(0, 2, m),
        frozen_intensities=rng.uniform(0, 255, m),
        neighborhood_radius=int(radio or rng.integers(1, 3)),
    )


def prueba_nucleo_de_pares():
    params = CrfParams()
    assert abs(pairwise_kernel((0, 0), (0, 0), 10.0, 10.0, params) - (params.w1 + params.w2)) < 1e-15
    assert abs(pairwise_kernel((1, 2), (2, 4), 0.0, 20.0, PARAMS_PRUEBA)
               - _nucleo((1, 2), (2, 4), 0.0, 20.0, PARAMS_PRUEBA)) < 1e-15


def prueba_energia_igual_al_oraculo():
    rng = np.random.default_rng(0)
    for _ in range(100):
        inst = _instancia_aleatoria(rng)
        x = rng.integers(0, 2, inst.n)
        assert abs(energy(x, inst, PARAMS_PRUEBA) - _energia_oraculo(x, inst, PARAMS_PRUEBA)) < 1e-12


def prueba_fuerza_bruta_es_el_minimo():
    rng = np.random.default_rng(1)
    for _ in range(20):
        inst = _instancia_aleatoria(rng, n_max=8)
        etiquetas, minimo = brute_force_map(inst, PARAMS_PRUEBA)
        todas = [_energia_oraculo(np.array(x), inst, PARAMS_PRUEBA)
                 for x in itertools.product((0, 1), repeat=inst.n)]
        assert abs(minimo - min(todas)) < 1e-12
        assert abs(energy(etiquetas, inst, PARAMS_PRUEBA) - minimo) < 1e-12


def prueba_fuerza_bruta_empate_lexicografico():
    inst = CrfInstance(pixels=[(0, 0), (0, 5), (5, 0)], unary=np.zeros((3, 2)), intensities=[0.0, 0.0, 0.0])
    etiquetas, minimo = brute_force_map(inst, CrfParams())
    np.testing.assert_array_equal(etiquetas, [0, 0, 0])
    assert minimo == 0.0


def prueba_fuerza_bruta_limite():
    pixeles = [(i // 5, i % 5) for i in range(21)]
    inst = CrfInstance(pixels=pixeles, unary=np.zeros((21, 2)), intensities=np.zeros(21))
    with pytest.raises(ConfigError):
        brute_force_map(inst, CrfParams())


def prueba_campo_medio_no_empeora_el_argmax_unario():
    rng = np.random.default_rng(2)
    params = CrfParams(theta_alpha=5.0, neighborhood_radius=1)
    mejores = 0
    for _ in range(100):
        inst = _instancia_aleatoria(rng, radio=1)
        q, etiquetas = mean_field_infer(inst, params)
        np.testing.assert_allclose(q.sum(axis=1), 1.0, atol=1e-12)
        argmax_unario = np.argmin(inst.unary, axis=1)
        if energy(etiquetas, inst, params) <= energy(argmax_unario, inst, params) + 1e-12:
            mejores += 1
    assert mejores >= 90


def prueba_sin_pares_es_el_argmax_unario():
    rng = np.random.default_rng(3)
    params = CrfParams(w1=0.0, w2=0.0)
    for _ in range(20):
        inst = _instancia_aleatoria(rng)
        _, etiquetas = mean_field_infer(inst, params)
        np.testing.assert_array_equal(etiquetas, np.argmin(inst.unary, axis=1))


def _permutada(inst, orden):
    return CrfInstance(pixels=inst.pixels[orden], unary=inst.unary[orden], intensities=inst.intensities[orden],
                       frozen_pixels=inst.frozen_pixels, frozen_labels=inst.frozen_labels,
                       frozen_intensities=inst.frozen_intensities, neighborhood_radius=inst.neighborhood_radius)


def prueba_el_orden_de_los_pixeles_no_importa():
    rng = np.random.default_rng(8)
    for _ in range(30):
        inst = _instancia_aleatoria(rng)
        orden = rng.permutation(inst.n)
        otra = _permutada(inst, orden)
        x = rng.integers(0, 2, inst.n)
        assert abs(energy(x[orden], otra, PARAMS_PRUEBA) - energy(x, inst, PARAMS_PRUEBA)) < 1e-12
        q, etiquetas = mean_field_infer(inst, PARAMS_PRUEBA)
        q_otra, etiquetas_otra = mean_field_infer(otra, PARAMS_PRUEBA)
        np.testing.assert_allclose(q_otra, q[orden], atol=1e-12)
        np.testing.assert_array_equal(etiquetas_otra, etiquetas[orden])


def prueba_cadena_de_dos_pixeles():
    # El vecino seguro arrastra al dudoso: el acoplamiento supera la diferencia de unarios
    inst = CrfInstance(pixels=[(0, 0), (0, 1)], unary=-np.log([[0.1, 0.9], [0.55, 0.45]]),
                       intensities=[0.0, 0.0], neighborhood_radius=1)
    params = CrfParams(w1=0.0, w2=10.0, theta_gamma=100.0, neighborhood_radius=1)
    _, etiquetas = mean_field_infer(inst, params)
    np.testing.assert_array_equal(etiquetas, [1, 1])
    exactas, minimo = brute_force_map(inst, params)
    np.testing.assert_array_equal(exactas, [1, 1])
    assert abs(minimo - (-math.log(0.9) - math.log(0.45))) < 1e-12


def prueba_campo_medio_alcanza_un_punto_fijo():
    rng = np.random.default_rng(9)
    for _ in range(10):
        inst = _instancia_aleatoria(rng, radio=1)
        base = CrfParams(w1=0.1, w2=0.1, theta_alpha=5.0, neighborhood_radius=1)
        q100, _ = mean_field_infer(inst, replace(base, iterations=100))
        q101, _ = mean_field_infer(inst, replace(base, iterations=101))
        assert np.abs(q101 - q100).max() < 1e-9


def prueba_instancia_invalida():
    with pytest.raises(ConfigError):
        CrfInstance(pixels=[(0, 0), (0, 0)], unary=np.zeros((2, 2)), intensities=[0.0, 0.0])
    with pytest.raises(ConfigError):
        CrfInstance(pixels=[(0, 0)], unary=[[np.inf, 0.0]], intensities=[0.0])
    inst = CrfInstance(pixels=[(0, 0)], unary=np.zeros((1, 2)), intensities=[0.0])
    with pytest.raises(ConfigError):
        energy([2], inst, CrfParams())
    with pytest.raises(ConfigError):
        CrfParams(theta_alpha=0.0)


def _mapa_disco(rng, H=24, W=24, radio=7.0):
    y, x = np.indices((H, W))
    distancia = np.hypot(y - H / 2, x - W / 2)
    p1 = 1.0 / (1.0 + np.exp(distancia - radio)) + rng.normal(0, 0.1, (H, W))
    p1 = np.clip(p1, 0.01, 0.99)
    return np.stack([1.0 - p1, p1])


def prueba_banda_de_borde():
    rng = np.random.default_rng(4)
    probs = _mapa_disco(rng)
    borde = boundary_band(probs, 0.5, 0)
    banda = boundary_band(probs, 0.5, 2)
    assert borde.any() and np.all(banda[borde])
    assert banda.sum() > borde.sum()
    assert not boundary_band(np.stack([np.ones((5, 5)), np.zeros((5, 5))]), 0.5, 3).any()


def prueba_refinamiento_solo_cambia_la_banda():
    rng = np.random.default_rng(5)
    for semilla in range(5):
        probs = _mapa_disco(np.random.default_rng(semilla))
        imagen = reescalar_gris(rng.normal(100, 30, (24, 24)) + 80 * (probs[1] > 0.5))
        banda = boundary_band(probs, 0.5, PARAMS_PRUEBA.band_width)
        refinada = refine(probs, imagen, PARAMS_PRUEBA)
        base = (probs[1] > 0.5).astype(np.uint8)
        cambios = refinada != base
        assert set(map(tuple, np.argwhere(cambios))) <= set(map(tuple, np.argwhere(banda)))
        assert refinada.dtype == np.uint8


def prueba_refinamiento_sin_organo_es_vacio():
    probs = np.stack([np.full((8, 8), 0.9), np.full((8, 8), 0.1)])
    np.testing.assert_array_equal(refine(probs, np.zeros((8, 8))), np.zeros((8, 8), dtype=np.uint8))


def prueba_instancia_de_la_banda():
    probs = _mapa_disco(np.random.default_rng(6))
    banda = boundary_band(probs, 0.5, 1)
    inst = construir_instancia(probs, np.zeros((24, 24)), banda, PARAMS_PRUEBA)
    assert inst.n == banda.sum()
    # Los congelados son vecinos de la banda dentro del radio, nunca de la banda
    assert not banda[inst.frozen_pixels[:, 0], inst.frozen_pixels[:, 1]].any()
    np.testing.assert_array_equal(inst.frozen_labels,
                                  (probs[1] > 0.5)[inst.frozen_pixels[:, 0], inst.frozen_pixels[:, 1]])


def prueba_reescalar_gris():
    np.testing.assert_array_equal(reescalar_gris(np.full((3, 3), 7.0)), np.zeros((3, 3)))
    g = reescalar_gris(np.array([[-200.0, 50.0], [300.0, 0.0]]))
    assert g.min() == 0.0 and g.max() == 255.0


def _banda_oraculo(mascara, ancho):
    H, W = mascara.shape
    borde = np.zeros((H, W), dtype=bool)
    for y, x in np.ndindex(H, W):
        for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            v, u = y + dy, x + dx
            dentro = 0 <= v < H and 0 <= u < W
            vecino = mascara[v, u] if dentro else False
            if (mascara[y, x] and not vecino) or (not mascara[y, x] and vecino):
                borde[y, x] = True
    banda = np.zeros((H, W), dtype=bool)
    for y, x in np.ndindex(H, W):
        banda[y, x] = any(max(abs(y - b[0]), abs(x - b[1])) <= ancho for b in np.argwhere(borde))
    return banda


def prueba_banda_igual_al_oraculo():
    rng = np.random.default_rng(10)
    for ancho in range(4):
        for umbral in (0.3, 0.5, 0.8):
            p1 = rng.random((9, 11))
            banda = boundary_band(np.stack([1.0 - p1, p1]), umbral, ancho)
            np.testing.assert_array_equal(banda, _banda_oraculo(p1 > umbral, ancho))
    probs = _mapa_disco(rng, 12, 12, 3.0)
    np.testing.assert_array_equal(boundary_band(probs, 0.5, 2), _banda_oraculo(probs[1] > 0.5, 2))


def prueba_refinamiento_no_empeora_un_disco_ruidoso():
    antes, despues = [], []
    for semilla in range(5):
        rng = np.random.default_rng(20 + semilla)
        y, x = np.indices((32, 32))
        verdad = (np.hypot(y - 16, x - 16) < 9.0).astype(np.uint8)
        probs = _mapa_disco(rng, 32, 32, 9.0)
        imagen = reescalar_gris(50.0 + 150.0 * verdad + rng.normal(0, 5, (32, 32)))
        antes.append(dice((probs[1] > 0.5).astype(np.uint8), verdad))
        despues.append(dice(refine(probs, imagen, PARAMS_PRUEBA), verdad))
    assert np.mean(despues) >= np.mean(antes)
