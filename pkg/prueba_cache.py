#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Pruebas de los cachés de aumentación y de mapas de peso.
"""

import os
import numpy as np
from config import WEIGHT_CACHE_MAX_ENTRIES
from helpers.cache_manager import AumentoCache, MapaPesosCache
from helpers.dataio import cargar_escaneo, listar_escaneos
from helpers.sintetico import generar_elipsoide
from helpers.weightmap_loss import LossParams, weight_map


def prueba_aumentacion_idempotente(tmp_path):
    directorio = os.path.join(tmp_path, "aumentados")
    registro = generar_elipsoide((16, 16, 3), seed=0, scan_id="c01")
    cache = AumentoCache(directorio)
    assert cache.materializar(registro) == 7
    assert cache.materializar(registro) == 0
    assert len(listar_escaneos(directorio)) == 7

    # Un caché nuevo sobre el mismo directorio lee el manifiesto
    recargado = AumentoCache(directorio)
    assert recargado.pendientes("c01") == []
    assert recargado.variantes("c01") == sorted(listar_escaneos(directorio))
    variante = cargar_escaneo(directorio, "c01_rot+10")
    assert variante.volume.shape == registro.volume.shape


def prueba_aumentacion_repone_archivos_borrados(tmp_path):
    directorio = os.path.join(tmp_path, "aumentados")
    registro = generar_elipsoide((16, 16, 2), seed=1, scan_id="c02")
    cache = AumentoCache(directorio)
    cache.materializar(registro)
    os.remove(os.path.join(directorio, "c02_rot-30.vol"))
    assert cache.pendientes("c02") == [-30]
    assert cache.materializar(registro) == 1


def prueba_mapa_de_pesos_acierto_igual_a_fallo(tmp_path):
    mascara = generar_elipsoide((16, 16, 1), seed=2).mask[:, :, 0]
    params = LossParams(w0=10.0, sigma=3.0)

    primero = MapaPesosCache(params, str(tmp_path))
    fallo = primero.obtener("s", 0, mascara)
    assert primero.estadisticas()["fallos"] == 1

    segundo = MapaPesosCache(params, str(tmp_path))
    acierto = segundo.obtener("s", 0, mascara)
    assert segundo.estadisticas()["aciertos"] == 1
    np.testing.assert_array_equal(acierto, fallo)
    np.testing.assert_allclose(fallo, weight_map(mascara, params).weights, rtol=1e-6)


def prueba_mapa_de_pesos_en_memoria():
    mascara = np.zeros((8, 8), dtype=np.uint8)
    mascara[2:5, 2:5] = 1
    cache = MapaPesosCache(max_size=1)
    np.testing.assert_array_equal(cache.obtener("a", 0, mascara), weight_map(mascara).weights)
    cache.obtener("a", 1, mascara)
    assert list(cache.cache) == ["a:1"]

    # Por defecto la memoria queda acotada
    acotado = MapaPesosCache()
    assert acotado.max_size == WEIGHT_CACHE_MAX_ENTRIES
    for z in range(WEIGHT_CACHE_MAX_ENTRIES + 5):
        acotado.obtener("b", z, mascara)
    assert acotado.estadisticas()["entradas"] == WEIGHT_CACHE_MAX_ENTRIES
    assert f"b:{WEIGHT_CACHE_MAX_ENTRIES + 4}" in acotado.cache and "b:0" not in acotado.cache


def prueba_manifiesto_ajeno_se_ignora(tmp_path):
    directorio = os.path.join(tmp_path, "aumentados")
    os.makedirs(directorio)
    with open(os.path.join(directorio, "manifiesto.json"), "w", encoding="utf-8") as f:
        f.write('{"metadata": {}, "entries": {"x_rot+0": {}}}')
    cache = AumentoCache(directorio)
    assert cache.cache == {}
    registro = generar_elipsoide((8, 8, 1), seed=4, scan_id="c03")
    assert cache.materializar(registro, [0]) == 1
    assert AumentoCache(directorio).variantes("c03") == ["c03_rot+0"]
