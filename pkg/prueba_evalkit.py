#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Pruebas de evaluación: Dice, normalización de tiempos, segmentación de
volúmenes completos, tabla de reportes y superposiciones PPM.
"""

import os
import numpy as np
import pytest
from helpers.crf_refine import CrfParams
from helpers.error_handler import ConfigError
from helpers.evalkit import (
    SegmentationReport, dice, timing_normalize, probability_volume, segment_volume,
    tabla_reportes, formatear_tabla, lineas_reporte, escribir_overlay_ppm, emitir_overlays
)
from helpers.net3d2d import NetworkConfig, build
from helpers.sintetico import generar_elipsoide

CONFIG = NetworkConfig(input_height=16, input_width=16, input_depth=5, stages=1,
                       channels=(2, 4), convs_per_stage=2, dropout_p=0.5)


def prueba_dice():
    a = np.zeros((4, 4, 2), dtype=np.uint8)
    b = np.zeros((4, 4, 2), dtype=np.uint8)
    assert dice(a, b) == 1.0
    a[0, 0, 0] = a[1, 1, 0] = 1
    assert dice(a, b) == 0.0
    b[0, 0, 0] = 1
    assert dice(a, b) == pytest.approx(2.0 / 3.0, abs=1e-15)
    assert dice(a, a) == 1.0
    with pytest.raises(ConfigError):
        dice(a, np.zeros((4, 4, 1)))


def prueba_normalizacion_de_tiempos():
    assert timing_normalize(42.72, 100, 512, 512) == pytest.approx(42.72, abs=1e-12)
    assert timing_normalize(10.0, 50, 256, 256) == pytest.approx(80.0, abs=1e-12)
    assert timing_normalize(55.59, 200, 512, 512) == pytest.approx(27.795, abs=1e-12)
    with pytest.raises(ConfigError):
        timing_normalize(1.0, 0, 512, 512)


def prueba_segmentacion_con_y_sin_crf():
    params = build(CONFIG, seed=0)
    scan = generar_elipsoide((16, 16, 4), seed=1)
    probs = probability_volume(params, scan)
    assert probs[0].shape == (2, 16, 16, 4)

    mascara, sin_crf = segment_volume(params, scan, None, probs=probs)
    mascara_crf, con_crf = segment_volume(params, scan, CrfParams(theta_alpha=5.0), probs=probs)
    assert mascara.shape == scan.mask.shape and mascara.dtype == np.uint8
    assert mascara_crf.shape == scan.mask.shape
    assert sin_crf.dice_pre == con_crf.dice_pre
    assert sin_crf.dice_post is None and sin_crf.crf_seconds is None
    assert con_crf.dice_post is not None and con_crf.crf_seconds >= 0.0
    assert sin_crf.slices == 4
    assert sin_crf.normalized_seconds == pytest.approx(
        timing_normalize(sin_crf.net_seconds, 4, 16, 16), rel=1e-12)


def prueba_inferencia_paralela_igual_a_secuencial():
    params = build(CONFIG, seed=3)
    scan = generar_elipsoide((16, 16, 5), seed=2)
    secuencial, _ = probability_volume(params, scan, hilos=1)
    paralela, _ = probability_volume(params, scan, hilos=3)
    np.testing.assert_array_equal(secuencial, paralela)


def prueba_sin_verdad():
    params = build(CONFIG, seed=0)
    scan = generar_elipsoide((16, 16, 3), seed=1)
    _, reporte = segment_volume(params, scan, None, con_verdad=False)
    assert reporte.dice_pre is None
    assert reporte.a_linea().split("\t")[1] == ""


def prueba_tabla_y_lineas():
    reportes = [
        SegmentationReport("a", 0.9, 0.92, 1.0, 0.5, 10.0, 3),
        SegmentationReport("b", 0.8, 0.84, 2.0, 1.5, 20.0, 3),
    ]
    tabla = tabla_reportes(reportes)
    assert list(tabla["scan_id"]) == ["a", "b", "media"]
    assert tabla.iloc[-1]["dice_pre"] == pytest.approx(0.85)
    assert len(tabla_reportes(reportes[:1])) == 1
    texto = formatear_tabla(reportes)
    assert "dice_post" in texto and "media" in texto
    lineas = lineas_reporte(reportes)
    assert lineas[0] == "a\t0.900000\t0.920000\t1.000000\t0.500000\t10.000000"
    assert SegmentationReport("c", 0.5, None, 1.0, None, 2.0).a_linea() == "c\t0.500000\t\t1.000000\t\t2.000000"


def _leer_ppm(path):
    with open(path, "rb") as f:
        contenido = f.read()
    cabecera, resto = contenido.split(b"\n", 3)[:3], contenido.split(b"\n", 3)[3]
    assert cabecera[0] == b"P6" and cabecera[2] == b"255"
    W, H = (int(v) for v in cabecera[1].split())
    return np.frombuffer(resto, dtype=np.uint8).reshape(H, W, 3)


def prueba_overlay_ppm(tmp_path):
    imagen = np.linspace(-200, 300, 6 * 7).reshape(6, 7)
    prediccion = np.zeros((6, 7), dtype=np.uint8)
    prediccion[1:4, 1:4] = 1
    verdad = np.zeros((6, 7), dtype=np.uint8)
    verdad[1:4, 3:6] = 1
    ruta = escribir_overlay_ppm(imagen, prediccion, verdad, os.path.join(tmp_path, "o", "z.ppm"))
    rgb = _leer_ppm(ruta)
    assert rgb.shape == (6, 7, 3)
    assert tuple(rgb[2, 1]) == (255, 0, 0)
    assert tuple(rgb[2, 5]) == (0, 255, 0)
    assert tuple(rgb[1, 3]) == (255, 255, 0)
    assert rgb[5, 0, 0] == rgb[5, 0, 1] == rgb[5, 0, 2]


def prueba_overlays_por_rebanada(tmp_path):
    scan = generar_elipsoide((8, 8, 3), seed=0, scan_id="o1")
    rutas = emitir_overlays(scan, scan.mask, str(tmp_path))
    assert [os.path.basename(r) for r in rutas] == ["o1_z0000.ppm", "o1_z0001.ppm", "o1_z0002.ppm"]
    assert all(os.path.exists(r) for r in rutas)
