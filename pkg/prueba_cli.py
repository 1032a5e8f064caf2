#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Pruebas de la línea de comandos: configuración, códigos de salida y
subcomandos sobre un conjunto sintético pequeño.
"""

import json
import os
import numpy as np
import pytest
import voxelseg
from helpers import tensor_core
from helpers.dataio import load_volume, save_volume, ruta_volumen, MODALIDAD_PROBABILIDAD
from helpers.error_handler import ConfigError
from helpers.gradcheck import OPERACIONES, ejecutar_suite, peor_resultado
from helpers.net3d2d import NetworkConfig, build, save_checkpoint
from helpers.run_config import cargar_run_config, desde_dict
from helpers.sintetico import escribir_conjunto_sintetico

CONFIG_RED = NetworkConfig(input_height=16, input_width=16, input_depth=5, stages=1,
                           channels=(2, 4), convs_per_stage=2, dropout_p=0.5)
AJUSTES_RED = ["red.input_height=16", "red.input_width=16", "red.input_depth=5", "red.stages=1",
               "red.channels=[2,4]", "red.convs_per_stage=2", "red.dropout_p=0.5"]


@pytest.fixture
def entorno(tmp_path):
    raiz = os.path.join(tmp_path, "datos")
    ids = escribir_conjunto_sintetico(raiz, cantidad=2, forma=(16, 16, 4), seed=3)
    ajustes = AJUSTES_RED + [f"datos.raiz={raiz}", f"datos.cache={os.path.join(tmp_path, 'cache')}",
                             f"salida={os.path.join(tmp_path, 'salida')}"]
    argumentos = [a for s in ajustes for a in ("--set", s)]
    checkpoint = save_checkpoint(build(CONFIG_RED, seed=0), os.path.join(tmp_path, "red.ckpt"))
    return {"raiz": raiz, "ids": ids, "args": argumentos, "checkpoint": checkpoint,
            "salida": os.path.join(tmp_path, "salida"), "tmp": str(tmp_path)}


def _lineas_de(salida: str, scan_id: str):
    return [l.split("\t") for l in salida.splitlines() if l.startswith(f"{scan_id}\t")]


def prueba_print_config_ida_y_vuelta(capsys):
    ajustes = ["--set", "crf.iterations=7", "--seed", "11"]
    assert voxelseg.main(["print-config"] + ajustes) == 0
    documento = json.loads(capsys.readouterr().out)
    assert documento["semilla"] == 11 and documento["crf"]["iterations"] == 7
    assert desde_dict(documento) == cargar_run_config(None, ["crf.iterations=7", "semilla=11"])


def prueba_clave_desconocida(capsys):
    assert voxelseg.main(["print-config", "--set", "red.capas_extra=3"]) == 2
    assert "red.capas_extra" in capsys.readouterr().err


def prueba_tipo_de_valor_incorrecto(capsys):
    assert voxelseg.main(["print-config", "--set", 'red.stages="5"']) == 2
    assert "red.stages" in capsys.readouterr().err
    assert voxelseg.main(["print-config", "--set", "datos.al_vuelo=1"]) == 2
    with pytest.raises(ConfigError) as info:
        desde_dict({"red": {"channels": [2, "x"]}})
    assert info.value.detalles["clave"] == "red.channels"
    with pytest.raises(ConfigError):
        desde_dict({"semilla": 1.5})
    assert desde_dict({"entrenamiento": {"learning_rate": 1, "dropout_p": None}}).entrenamiento.learning_rate == 1


def prueba_config_json_y_banderas(tmp_path, capsys):
    ruta = os.path.join(tmp_path, "corrida.json")
    with open(ruta, "w", encoding="utf-8") as f:
        json.dump({"semilla": 3, "pliegue": {"k": 4}}, f)
    assert voxelseg.main(["print-config", "--config", ruta, "--seed", "9", "--fold", "1"]) == 0
    documento = json.loads(capsys.readouterr().out)
    assert documento["semilla"] == 9
    assert documento["pliegue"]["k"] == 4 and documento["pliegue"]["indice"] == 1
    assert voxelseg.main(["print-config", "--config", os.path.join(tmp_path, "no_existe.json")]) == 2


def prueba_augment_idempotente(entorno, capsys):
    assert voxelseg.main(["augment"] + entorno["args"]) == 0
    salida = capsys.readouterr().out
    assert "nuevos\t14" in salida and "en_cache\t14" in salida
    aumentados = os.path.join(entorno["tmp"], "cache", "aumentados")
    assert len([n for n in os.listdir(aumentados) if n.endswith("_rot+0.vol")]) == 2

    assert voxelseg.main(["augment"] + entorno["args"]) == 0
    assert "nuevos\t0" in capsys.readouterr().out


def prueba_augment_sin_mascara(entorno, capsys):
    save_volume(np.zeros((16, 16, 4), dtype=np.float32), ruta_volumen(entorno["raiz"], "huerfano"))
    assert voxelseg.main(["augment"] + entorno["args"]) == 1
    assert "error\thuerfano" in capsys.readouterr().out


def prueba_checkpoint_inexistente(entorno):
    argumentos = ["segment", "--checkpoint", os.path.join(entorno["tmp"], "no.ckpt"),
                  "--scan", entorno["ids"][0]] + entorno["args"]
    assert voxelseg.main(argumentos) == 2


def prueba_segment_con_y_sin_crf(entorno, capsys):
    scan_id = entorno["ids"][0]
    base = ["segment", "--checkpoint", entorno["checkpoint"], "--scan", scan_id] + entorno["args"]
    assert voxelseg.main(base + ["--probabilidades"]) == 0
    (sin_crf,) = _lineas_de(capsys.readouterr().out, scan_id)
    assert voxelseg.main(base + ["--crf"]) == 0
    (con_crf,) = _lineas_de(capsys.readouterr().out, scan_id)

    assert sin_crf[1] == con_crf[1]
    assert sin_crf[2] == "" and con_crf[2] != ""
    mascara = load_volume(os.path.join(entorno["salida"], f"{scan_id}_prediccion.vol"))
    assert mascara.dims == (16, 16, 4) and set(np.unique(mascara.data)) <= {0, 1}
    assert os.path.exists(os.path.join(entorno["salida"], f"{scan_id}_prediccion_crf.vol"))
    probabilidad = load_volume(os.path.join(entorno["salida"], f"{scan_id}_probabilidad.vol"))
    assert probabilidad.modality == MODALIDAD_PROBABILIDAD


def prueba_segment_con_overlays(entorno):
    directorio = os.path.join(entorno["tmp"], "overlays")
    argumentos = ["segment", "--checkpoint", entorno["checkpoint"], "--scan", entorno["ids"][1],
                  "--overlay", directorio] + entorno["args"]
    assert voxelseg.main(argumentos) == 0
    assert len(os.listdir(directorio)) == 4


def prueba_refine(entorno):
    salida = entorno["salida"]
    scan_id = entorno["ids"][0]
    assert voxelseg.main(["segment", "--checkpoint", entorno["checkpoint"], "--scan", scan_id,
                          "--probabilidades"] + entorno["args"]) == 0
    destino = os.path.join(entorno["tmp"], "refinada.vol")
    argumentos = ["refine", "--probabilidades", os.path.join(salida, f"{scan_id}_probabilidad.vol"),
                  "--imagen", ruta_volumen(entorno["raiz"], scan_id), "--salida-mascara", destino]
    assert voxelseg.main(argumentos + entorno["args"]) == 0
    refinada = load_volume(destino)
    assert refinada.dims == (16, 16, 4) and set(np.unique(refinada.data)) <= {0, 1}

    otra = save_volume(np.zeros((8, 8, 4), dtype=np.float32), os.path.join(entorno["tmp"], "otra.vol"))
    argumentos[argumentos.index("--imagen") + 1] = otra
    assert voxelseg.main(argumentos + entorno["args"]) == 2


def prueba_eval(entorno, capsys):
    argumentos = ["eval", "--checkpoint", entorno["checkpoint"]] + entorno["args"]
    assert voxelseg.main(argumentos) == 0
    salida = capsys.readouterr().out
    assert "media" in salida
    assert all(len(_lineas_de(salida, s)) == 1 for s in entorno["ids"])


def prueba_train_al_vuelo(tmp_path, capsys):
    raiz = os.path.join(tmp_path, "datos")
    escribir_conjunto_sintetico(raiz, cantidad=4, forma=(16, 16, 4), seed=5)
    ajustes = AJUSTES_RED + [f"datos.raiz={raiz}", f"datos.cache={os.path.join(tmp_path, 'cache')}",
                             f"salida={os.path.join(tmp_path, 'salida')}", "pliegue.k=2", "pliegue.validacion=1",
                             "entrenamiento.max_epochs=1", "entrenamiento.learning_rate=0.001"]
    argumentos = ["train", "--fold", "0", "--al-vuelo"] + [a for s in ajustes for a in ("--set", s)]
    assert voxelseg.main(argumentos) == 0
    salida = capsys.readouterr().out
    assert "pliegue 0\tepoca 1\t" in salida and "pliegue 0\tmejor_epoca 1\t" in salida

    directorio = os.path.join(tmp_path, "salida", "pliegue_0")
    with open(os.path.join(directorio, "config.json"), encoding="utf-8") as f:
        assert json.load(f)["datos"]["al_vuelo"] is True
    assert os.path.exists(os.path.join(directorio, "epoca_0001.ckpt"))


def prueba_train_sin_cache_de_aumentos(entorno):
    assert voxelseg.main(["train", "--fold", "0"] + entorno["args"]) == 1


def prueba_gradcheck_aprueba(capsys):
    assert voxelseg.main(["gradcheck"]) == 0
    filas = [l.split("\t") for l in capsys.readouterr().out.splitlines()]
    assert sorted(f[0] for f in filas) == sorted(OPERACIONES)
    assert all(f[2] == "ok" for f in filas)


def prueba_gradcheck_detecta_un_adjunto_roto(monkeypatch, capsys):
    original = tensor_core.conv_backward

    def roto(grad_out, saved_input, spec, weights):
        gx, gw, gb = original(grad_out, saved_input, spec, weights)
        return gx, gw * 1.01, gb

    monkeypatch.setattr(tensor_core, "conv_backward", roto)
    assert voxelseg.main(["gradcheck", "--operacion", "conv2d"]) == 1
    assert "FALLA" in capsys.readouterr().out


def prueba_gradcheck_con_operaciones_inyectadas():
    def relu_roto(grad_out, saved_input):
        return grad_out

    (resultado,) = ejecutar_suite(semilla=2, ops={"relu_backward": relu_roto}, operaciones=["relu"])
    assert not resultado.aprobado
    assert peor_resultado(ejecutar_suite(semilla=2, operaciones=["relu", "dropout"])).aprobado
