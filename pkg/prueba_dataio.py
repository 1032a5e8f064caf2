#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Pruebas de E/S de volúmenes, ventana de intensidades, aumentación por
rotación, ventanas de rebanadas y planes de pliegues.
"""

import os
import struct
import numpy as np
import pytest
from helpers.dataio import (
    ScanRecord, VolumeFile, save_volume, load_volume, tamano_carga, listar_escaneos, cargar_escaneo,
    guardar_escaneo, clamp_hu, normalize_hu, rotate_scan, augment_all, extract_window, make_folds,
    id_aumentado, id_original, angulo_de, sin_rotaciones, MODALIDAD_MASCARA
)
from helpers.error_handler import ConfigError, DatosError, FormatoError
from helpers.evalkit import dice
from helpers.sintetico import generar_elipsoide

CABECERA = 46


def prueba_volumen_ida_y_vuelta(tmp_path):
    rng = np.random.default_rng(0)
    casos = [
        (rng.integers(-1000, 1000, (4, 5, 3)).astype(np.int16), 0),
        (rng.standard_normal((4, 5, 3)).astype(np.float32), 1),
        (rng.integers(0, 2, (4, 5, 3)).astype(np.uint8), 2),
    ]
    for datos, tag in casos:
        ruta = save_volume(datos, os.path.join(tmp_path, f"v{tag}.vol"), (0.7, 0.7, 2.5),
                           MODALIDAD_MASCARA, tag)
        vol = load_volume(ruta)
        np.testing.assert_array_equal(vol.data, datos)
        assert vol.dims == (4, 5, 3)
        assert vol.spacing == (0.7, 0.7, 2.5)
        assert vol.dtype_tag == tag and vol.modality == MODALIDAD_MASCARA
        assert os.path.getsize(ruta) == CABECERA + tamano_carga(4, 5, 3, tag)


def prueba_carga_en_orden_profundidad_fila_columna(tmp_path):
    datos = np.arange(2 * 3 * 4, dtype=np.int16).reshape(2, 3, 4)
    ruta = save_volume(VolumeFile(datos, dtype_tag=0), os.path.join(tmp_path, "orden.vol"))
    with open(ruta, "rb") as f:
        f.seek(CABECERA)
        valores = struct.unpack("<3h", f.read(6))
    # Rebanada 0: fila 0 recorrida por columnas
    assert valores == (datos[0, 0, 0], datos[0, 1, 0], datos[0, 2, 0])


def prueba_volumen_danado(tmp_path):
    ruta = save_volume(np.zeros((3, 3, 2), dtype=np.float32), os.path.join(tmp_path, "v.vol"))
    with open(ruta, "rb") as f:
        contenido = f.read()

    truncado = os.path.join(tmp_path, "truncado.vol")
    with open(truncado, "wb") as f:
        f.write(contenido[:-4])
    with pytest.raises(DatosError):
        load_volume(truncado)

    sobrante = os.path.join(tmp_path, "sobrante.vol")
    with open(sobrante, "wb") as f:
        f.write(contenido + b"\x00")
    with pytest.raises(DatosError):
        load_volume(sobrante)

    magia = os.path.join(tmp_path, "magia.vol")
    with open(magia, "wb") as f:
        f.write(b"NOPE" + contenido[4:])
    with pytest.raises(FormatoError):
        load_volume(magia)

    imposible = os.path.join(tmp_path, "imposible.vol")
    with open(imposible, "wb") as f:
        f.write(contenido[:8] + struct.pack("<III", 100000, 100000, 100000) + contenido[20:])
    with pytest.raises(FormatoError):
        load_volume(imposible)

    with pytest.raises(DatosError):
        load_volume(os.path.join(tmp_path, "no_existe.vol"))


def prueba_escaneos_en_directorio(tmp_path):
    raiz = str(tmp_path)
    registro = generar_elipsoide((16, 16, 5), seed=1, scan_id="a01")
    guardar_escaneo(registro, raiz)
    save_volume(np.zeros((16, 16, 5), dtype=np.float32), os.path.join(raiz, "b02.vol"))
    assert listar_escaneos(raiz) == ["a01", "b02"]

    cargado = cargar_escaneo(raiz, "a01")
    np.testing.assert_array_equal(cargado.mask, registro.mask)
    np.testing.assert_allclose(cargado.volume, registro.volume.astype(np.float32))
    with pytest.raises(DatosError) as info:
        cargar_escaneo(raiz, "b02")
    assert info.value.detalles["scan_id"] == "b02"
    with pytest.raises(DatosError):
        listar_escaneos(os.path.join(raiz, "no_existe"))


def prueba_scan_record_invalido():
    with pytest.raises(DatosError):
        ScanRecord("x", np.zeros((2, 2, 2)), np.zeros((2, 2, 3), dtype=np.uint8))
    with pytest.raises(DatosError):
        ScanRecord("x", np.zeros((2, 2, 1)), np.full((2, 2, 1), 2, dtype=np.uint8))


def prueba_ventana_hu():
    v = np.array([-1000.0, -200.0, 50.0, 300.0, 2000.0])
    np.testing.assert_array_equal(clamp_hu(v), [-200.0, -200.0, 50.0, 300.0, 300.0])
    np.testing.assert_allclose(normalize_hu(v), [0.0, 0.0, 0.5, 1.0, 1.0])


# ---------------------------------------------------------------------------
# Aumentación
# ---------------------------------------------------------------------------

def prueba_rotacion_cero_es_identidad():
    registro = generar_elipsoide((16, 16, 3), seed=2)
    rotado = rotate_scan(registro, 0)
    np.testing.assert_array_equal(rotado.volume, registro.volume)
    np.testing.assert_array_equal(rotado.mask, registro.mask)
    assert rotado.provenance == "original" and rotado.scan_id == "sint00_rot+0"


def prueba_siete_variantes():
    registro = generar_elipsoide((16, 16, 3), seed=3, scan_id="h07")
    variantes = augment_all(registro)
    assert [v.scan_id for v in variantes] == [id_aumentado("h07", a) for a in (-30, -20, -10, 0, 10, 20, 30)]
    assert [v.angle for v in variantes] == [-30.0, -20.0, -10.0, 0.0, 10.0, 20.0, 30.0]
    for v in variantes:
        assert v.volume.shape == registro.volume.shape
        assert set(np.unique(v.mask)) <= {0, 1}
        assert v.volume.min() >= -200.0 and v.volume.max() <= 300.0
    np.testing.assert_array_equal(variantes[3].volume, clamp_hu(registro.volume))


def prueba_angulo_fuera_de_rango():
    with pytest.raises(ConfigError):
        rotate_scan(generar_elipsoide((8, 8, 1)), 45)


def prueba_rotacion_recta_es_una_permutacion():
    rng = np.random.default_rng(4)
    volumen = rng.uniform(-200, 300, (16, 16, 3))
    mascara = (rng.random((16, 16, 3)) > 0.5).astype(np.uint8)
    rotado = rotate_scan(ScanRecord("p", volumen, mascara), 90, limite=None)
    np.testing.assert_array_equal(rotado.volume, np.rot90(volumen, k=1, axes=(0, 1)))
    np.testing.assert_array_equal(rotado.mask, np.rot90(mascara, k=1, axes=(0, 1)))


def prueba_rotacion_ida_y_vuelta():
    for seed in range(5):
        registro = generar_elipsoide((32, 32, 9), seed=seed)
        ida = rotate_scan(registro, 20)
        vuelta = rotate_scan(ida, -20)
        assert dice(vuelta.mask, registro.mask) >= 0.9


def prueba_identificadores_aumentados():
    assert id_aumentado("liver03", -10) == "liver03_rot-10"
    assert id_original("liver03_rot-10") == "liver03"
    assert id_original("liver03") == "liver03"


# ---------------------------------------------------------------------------
# Ventanas y pliegues
# ---------------------------------------------------------------------------

def prueba_ventana_con_replica_de_borde():
    volumen = np.arange(5, dtype=np.float64)[None, None, :] * np.ones((2, 2, 1))
    assert extract_window(volumen, 0, 5).shape == (1, 2, 2, 5)
    np.testing.assert_array_equal(extract_window(volumen, 0, 5)[0, 0, 0], [0, 0, 0, 1, 2])
    np.testing.assert_array_equal(extract_window(volumen, 4, 3)[0, 0, 0], [3, 4, 4])
    np.testing.assert_array_equal(extract_window(volumen, 2, 4)[0, 0, 0], [1, 2, 3, 4])
    with pytest.raises(ConfigError):
        extract_window(volumen, 5, 3)


def prueba_pliegues():
    originales = [f"s{i:02d}" for i in range(10)]
    ids = originales + [id_aumentado(s, a) for s in originales for a in (-10, 10)]
    plan = make_folds(ids, 5, 2, seed=7)
    assert plan.a_dict() == make_folds(ids, 5, 2, seed=7).a_dict()

    pruebas = [s for p in plan.folds for s in p.test]
    assert sorted(pruebas) == sorted(ids)
    for p in plan.folds:
        grupos_prueba = {id_original(s) for s in p.test}
        assert not grupos_prueba & {id_original(s) for s in p.train + p.validation}
        assert len({id_original(s) for s in p.validation}) == 2
        # Solo los originales, sin sus copias rotadas
        assert len(p.validation) == 2 and set(p.validation) <= set(originales)
        assert not {id_original(s) for s in p.train} & set(p.validation)
        assert len(p.test) == 2 * 3
    with pytest.raises(ConfigError):
        make_folds(originales, 11, 0, seed=0)
    with pytest.raises(ConfigError):
        make_folds(originales, 5, 8, seed=0)


def prueba_validacion_sin_rotaciones_en_cache():
    assert angulo_de("a_rot-10") == -10 and angulo_de("a_rot+0") == 0 and angulo_de("a") == 0
    assert sin_rotaciones(["a_rot-10", "a_rot+0", "a_rot+10", "b_rot+20", "c"]) == ["a_rot+0", "b_rot+20", "c"]

    # Identificadores como los deja augment: todas las variantes llevan sufijo
    ids = [id_aumentado(f"s{i:02d}", a) for i in range(6) for a in (-30, 0, 30)]
    for p in make_folds(ids, 3, 1, seed=2).folds:
        assert len(p.validation) == 1 and p.validation[0].endswith("_rot+0")
        assert len(p.train) == 3 * 3
