#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Pruebas de la red 3D-2D: geometría simbólica, construcción determinista,
paso hacia adelante, operaciones de skip y checkpoints.
"""

import json
import os
import struct
import numpy as np
import pytest
from helpers.error_handler import CheckpointError, ConfigError, DatosError, FormatoError, InternoError
from helpers import net3d2d
from helpers.gradcheck import ejecutar_suite
from helpers.net3d2d import (
    NetworkConfig, build, forward, backward, plan_formas, indice_centro_entrada,
    center_slice_extract, crop_concat, crop_concat_backward, depth_collapse, depth_collapse_backward,
    save_checkpoint, load_checkpoint
)

CONFIG_PEQUENA = NetworkConfig(input_height=16, input_width=16, input_depth=9, stages=2,
                               channels=(2, 3, 4), convs_per_stage=2, dropout_p=0.5)


def _ventana(seed=0, config=CONFIG_PEQUENA):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((1, config.input_height, config.input_width, config.input_depth))


def _forma(plan, capa):
    return next(e["forma"] for e in plan if e["capa"] == capa)


def prueba_plan_formas_arquitectura_completa():
    config = NetworkConfig(input_height=512, input_width=512, input_depth=38, stages=5, convs_per_stage=2)
    plan = plan_formas(config)
    assert _forma(plan, "cuello.pre_colapso")[1:3] == (16, 16)
    assert _forma(plan, "cuello.post_colapso") == (256, 16, 16, 1)
    assert _forma(plan, "enc0.bloque1") == (16, 512, 512, 34)
    assert _forma(plan, "enc4.pool") == (256, 16, 16, 18)
    assert _forma(plan, "dec0.crop_concat") == (32, 512, 512)
    assert plan[-1] == {"capa": "cabeza.conv", "forma": (2, 512, 512)}


def prueba_restricciones_de_configuracion():
    with pytest.raises(ConfigError) as info:
        NetworkConfig(input_height=20, input_width=16, input_depth=9, stages=2,
                      channels=(2, 3, 4)).validar()
    assert any("input_height" in r for r in info.value.detalles["restricciones"])
    assert NetworkConfig(input_depth=8, input_height=16, input_width=16, stages=2,
                         channels=(2, 3, 4)).restricciones_fallidas()
    with pytest.raises(ConfigError):
        build(NetworkConfig(input_height=16, input_width=16, input_depth=9, stages=2, channels=(2, 3)))
    assert CONFIG_PEQUENA.restricciones_fallidas() == []


def prueba_indice_centro_entrada():
    assert indice_centro_entrada(CONFIG_PEQUENA, 0) == 4
    assert indice_centro_entrada(CONFIG_PEQUENA, 1) == 4
    par = NetworkConfig(input_height=16, input_width=16, input_depth=10, stages=2, channels=(2, 3, 4))
    assert indice_centro_entrada(par, 0) == 4


def prueba_build_determinista():
    a = build(CONFIG_PEQUENA, seed=5)
    b = build(CONFIG_PEQUENA, seed=5)
    c = build(CONFIG_PEQUENA, seed=6)
    assert list(a.parametros) == list(b.parametros)
    for ruta in a.parametros:
        np.testing.assert_array_equal(a.parametros[ruta].data, b.parametros[ruta].data)
    assert any(not np.array_equal(a.parametros[r].data, c.parametros[r].data) for r in a.parametros)
    assert "enc0.bloque0.conv.weight" in a.parametros
    assert a.parametros["enc0.bloque0.conv.weight"].shape == (2, 1, 3, 3, 3)
    assert a.parametros["dec1.deconv.weight"].shape == (4, 3, 4, 4)
    assert a.parametros["cabeza.conv.weight"].shape == (2, 2, 1, 1)


def prueba_forward_produce_probabilidades():
    params = build(CONFIG_PEQUENA, seed=1)
    probs = forward(params, _ventana(), mode="infer")
    assert probs.shape == (2, 16, 16)
    np.testing.assert_allclose(probs.sum(axis=0), 1.0, atol=1e-12)
    np.testing.assert_array_equal(probs, forward(params, _ventana(), mode="infer"))


def prueba_forward_forma_incorrecta():
    params = build(CONFIG_PEQUENA, seed=1)
    with pytest.raises(ConfigError) as info:
        forward(params, np.zeros((1, 16, 16, 8)))
    assert info.value.detalles["ejes"] == [3]


def prueba_inferencia_no_modifica_estadisticas():
    params = build(CONFIG_PEQUENA, seed=1)
    antes = params.estados_bn["enc0.bloque0.bn"].running_mean.copy()
    forward(params, _ventana(), mode="infer")
    np.testing.assert_array_equal(params.estados_bn["enc0.bloque0.bn"].running_mean, antes)
    forward(params, _ventana(), mode="train", seed=2)
    assert not np.array_equal(params.estados_bn["enc0.bloque0.bn"].running_mean, antes)


def prueba_backward_acumula_en_todas_las_ranuras():
    params = build(CONFIG_PEQUENA, seed=1)
    cache = {}
    forward(params, _ventana(), mode="train", seed=3, cache=cache)
    params.zero_grad()
    g = backward(params, cache, np.ones((2, 16, 16)) * np.array([1.0, -1.0]).reshape(2, 1, 1))
    assert g.shape == (1, 16, 16, 9)
    assert np.abs(params.parametros["cabeza.conv.weight"].grad).sum() > 0
    with pytest.raises(InternoError):
        backward(params, {}, np.zeros((2, 16, 16)))


def prueba_todo_parametro_recibe_gradiente():
    params = build(CONFIG_PEQUENA, seed=1)
    cache = {}
    forward(params, _ventana(), mode="train", seed=3, cache=cache)
    params.zero_grad()
    backward(params, cache, np.random.default_rng(4).standard_normal((2, 16, 16)))
    for ruta, tensor in params.parametros.items():
        if ruta.endswith(".conv.bias"):
            # La normalización posterior resta la media: este sesgo no influye
            assert np.abs(tensor.grad).max() < 1e-8, ruta
        else:
            assert np.abs(tensor.grad).max() > 0.0, ruta


def prueba_capa_final_nula_da_mapa_uniforme():
    params = build(CONFIG_PEQUENA, seed=1)
    params.parametros["cabeza.conv.weight"].data[...] = 0.0
    params.parametros["cabeza.conv.bias"].data[...] = 0.0
    np.testing.assert_array_equal(forward(params, _ventana(), mode="infer"), 0.5)


def prueba_fan_in_de_la_deconvolucion(monkeypatch):
    llamadas = []
    original = net3d2d.inicializar_kernel

    def registrar(rng, forma, dtype=np.float64, fan_in=None):
        llamadas.append((tuple(forma), fan_in))
        return original(rng, forma, dtype, fan_in)

    monkeypatch.setattr(net3d2d, "inicializar_kernel", registrar)
    build(CONFIG_PEQUENA, seed=0)
    deconvs = [(forma, fan_in) for forma, fan_in in llamadas if forma[2:] == (4, 4)]
    assert [forma[:2] for forma, _ in deconvs] == [(4, 3), (3, 2)]
    assert all(fan_in == forma[0] * 16 for forma, fan_in in deconvs)


def prueba_red_completa_contra_diferencias_finitas():
    (resultado,) = ejecutar_suite(semilla=1, operaciones=["red_completa"])
    assert resultado.aprobado, resultado


def prueba_operaciones_de_skip():
    x = np.arange(2 * 2 * 2 * 4, dtype=np.float64).reshape(2, 2, 2, 4)
    np.testing.assert_array_equal(center_slice_extract(x), x[..., 1])
    np.testing.assert_array_equal(center_slice_extract(x[..., :3]), x[..., 1])

    dec = np.ones((1, 2, 2))
    enc = np.arange(2 * 4 * 5, dtype=np.float64).reshape(2, 4, 5)
    out = crop_concat(dec, enc)
    assert out.shape == (3, 2, 2)
    np.testing.assert_array_equal(out[1:], enc[:, 1:3, 1:3])
    gd, ge = crop_concat_backward(np.ones((3, 2, 2)), 1, enc.shape)
    assert gd.shape == (1, 2, 2) and ge.sum() == 8.0 and ge[:, 0].sum() == 0.0
    with pytest.raises(InternoError):
        crop_concat(np.ones((1, 5, 5)), enc)


def prueba_depth_collapse():
    x = np.random.default_rng(0).standard_normal((2, 3, 3, 4))
    np.testing.assert_allclose(depth_collapse(x), x.mean(axis=-1))
    np.testing.assert_array_equal(depth_collapse(x[..., :1]), x[..., 0])
    g = depth_collapse_backward(np.ones((2, 3, 3)), 4)
    np.testing.assert_allclose(g, 0.25)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def prueba_checkpoint_ida_y_vuelta(tmp_path):
    params = build(CONFIG_PEQUENA, seed=2)
    forward(params, _ventana(), mode="train", seed=1)
    ruta = save_checkpoint(params, os.path.join(tmp_path, "red.ckpt"))
    cargados = load_checkpoint(ruta, CONFIG_PEQUENA)
    for r in params.parametros:
        np.testing.assert_array_equal(params.parametros[r].data, cargados.parametros[r].data)
    for r in params.estados_bn:
        np.testing.assert_array_equal(params.estados_bn[r].running_var, cargados.estados_bn[r].running_var)
    np.testing.assert_array_equal(forward(params, _ventana(3)), forward(cargados, _ventana(3)))
    assert load_checkpoint(ruta).config == CONFIG_PEQUENA


def prueba_checkpoint_incompatible_lista_rutas(tmp_path):
    ruta = save_checkpoint(build(CONFIG_PEQUENA, seed=2), os.path.join(tmp_path, "red.ckpt"))
    otra = NetworkConfig(input_height=16, input_width=16, input_depth=9, stages=2,
                         channels=(2, 3, 5), convs_per_stage=2)
    with pytest.raises(CheckpointError) as info:
        load_checkpoint(ruta, otra)
    rutas = {d["ruta"] for d in info.value.detalles["diferencias"]}
    assert "cuello.bloque0.conv.weight" in rutas
    assert "enc0.bloque0.conv.weight" not in rutas


def prueba_checkpoint_danado(tmp_path):
    ruta = save_checkpoint(build(CONFIG_PEQUENA, seed=2), os.path.join(tmp_path, "red.ckpt"))
    with open(ruta, "rb") as f:
        contenido = f.read()

    truncado = os.path.join(tmp_path, "truncado.ckpt")
    with open(truncado, "wb") as f:
        f.write(contenido[:len(contenido) // 2])
    with pytest.raises(DatosError):
        load_checkpoint(truncado)

    magia = os.path.join(tmp_path, "magia.ckpt")
    with open(magia, "wb") as f:
        f.write(b"XXXXX" + contenido[5:])
    with pytest.raises(FormatoError):
        load_checkpoint(magia)

    with pytest.raises(DatosError):
        load_checkpoint(os.path.join(tmp_path, "no_existe.ckpt"))


def prueba_checkpoint_con_registro_ilegible(tmp_path):
    def escribir(nombre, cabecera):
        ruta = os.path.join(tmp_path, nombre)
        with open(ruta, "wb") as f:
            f.write(b"V3D2D" + struct.pack("<II", 1, len(cabecera)) + cabecera + struct.pack("<I", 0))
        return ruta

    casos = [
        json.dumps({"config": {"foo": 1}, "seed": 0}).encode("utf-8"),
        json.dumps({"seed": 0}).encode("utf-8"),
        json.dumps({"config": [1, 2], "seed": 0}).encode("utf-8"),
        json.dumps({"config": CONFIG_PEQUENA.a_dict(), "seed": "x"}).encode("utf-8"),
        b"\xff\xfe",
    ]
    for i, cabecera in enumerate(casos):
        with pytest.raises(FormatoError):
            load_checkpoint(escribir(f"c{i}.ckpt", cabecera))
