#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Pruebas del entrenamiento: optimizadores, TrainLog, parada temprana,
determinismo, reanudación y la corrida de sobreajuste sintético.
"""

import os
import numpy as np
import pytest
from helpers.crf_refine import CrfParams
from helpers.dataio import Pliegue, ScanRecord, cargar_escaneo, guardar_escaneo
from helpers.error_handler import ConfigError, EntrenamientoError, InternoError
from helpers.evalkit import segment_volume
from helpers.net3d2d import NetworkConfig
from helpers.cache_manager import MapaPesosCache
from helpers.sintetico import escribir_conjunto_sintetico
from helpers.tensor_core import Tensor
from helpers.trainer import (
    TrainConfig, TrainLog, RegistroEpoca, EstadoOptimizador, optimizer_step, validate, train,
    ARCHIVO_LOG, ARCHIVO_OPTIMIZADOR
)

CONFIG_RED = NetworkConfig(input_height=16, input_width=16, input_depth=5, stages=1,
                           channels=(2, 4), convs_per_stage=2, dropout_p=0.5)


@pytest.fixture
def datos(tmp_path):
    raiz = os.path.join(tmp_path, "datos")
    ids = escribir_conjunto_sintetico(raiz, cantidad=3, forma=(16, 16, 4), seed=10)
    return raiz, ids


def _sin_segundos(log):
    return log.a_dataframe().drop(columns=["seconds"])


# ---------------------------------------------------------------------------
# Optimizadores
# ---------------------------------------------------------------------------

def prueba_configuracion_invalida():
    with pytest.raises(ConfigError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(ConfigError):
        TrainConfig(patience=0)
    assert TrainConfig(loss={"w0": 5.0}).loss.w0 == 5.0


def prueba_sgd_con_momento():
    config = TrainConfig(optimizer="sgd_momentum", learning_rate=0.1, momentum=0.5)
    params = {"w": Tensor(np.array([1.0, 2.0]), True)}
    estado = EstadoOptimizador()
    optimizer_step(params, {"w": np.array([1.0, -1.0])}, estado, config)
    np.testing.assert_allclose(params["w"].data, [0.9, 2.1], atol=1e-15)
    optimizer_step(params, {"w": np.array([1.0, -1.0])}, estado, config)
    np.testing.assert_allclose(params["w"].data, [0.75, 2.25], atol=1e-15)
    np.testing.assert_array_equal(params["w"].grad, [0.0, 0.0])


def prueba_adam_primer_paso():
    config = TrainConfig(learning_rate=0.01)
    params = {"w": Tensor(np.array([0.0, 0.0]), True, np.array([3.0, -0.5]))}
    estado = optimizer_step(params, None, EstadoOptimizador(), config)
    np.testing.assert_allclose(params["w"].data, [-0.01, 0.01], rtol=1e-6)
    assert estado.paso == 1


def prueba_adam_converge_en_una_cuadratica():
    config = TrainConfig(learning_rate=0.1)
    params = {"w": Tensor(np.array([0.0]), True)}
    estado = EstadoOptimizador()
    for _ in range(2000):
        optimizer_step(params, {"w": 2.0 * (params["w"].data - 3.0)}, estado, config)
        if abs(params["w"].data[0] - 3.0) < 1e-3:
            break
    assert abs(params["w"].data[0] - 3.0) < 1e-3
    assert estado.paso < 2000


def prueba_gradiente_faltante():
    with pytest.raises(InternoError):
        optimizer_step({"w": Tensor(np.zeros(2))}, None, EstadoOptimizador(), TrainConfig())


def prueba_estado_optimizador_persistente(tmp_path):
    estado = EstadoOptimizador(3, {"a.weight": np.arange(3.0)}, {"a.weight": np.ones(3) / 7})
    ruta = estado.guardar(os.path.join(tmp_path, ARCHIVO_OPTIMIZADOR))
    cargado = EstadoOptimizador.cargar(ruta)
    assert cargado.paso == 3
    np.testing.assert_array_equal(cargado.v["a.weight"], estado.v["a.weight"])


def prueba_trainlog_exacto(tmp_path):
    log = TrainLog()
    log.agregar(RegistroEpoca(1, 1.0 / 3.0, 0.1, 0.7, 0.5, 1.25, "epoca_0001.ckpt"))
    log.agregar(RegistroEpoca(2, 2.0 / 3.0, 0.2, 0.6, 0.6, 1.5, "epoca_0002.ckpt"))
    cargado = TrainLog.cargar(log.guardar(os.path.join(tmp_path, ARCHIVO_LOG)))
    assert cargado.registros == log.registros
    assert cargado.mejor_epoca == 2
    with pytest.raises(InternoError):
        log.agregar(RegistroEpoca(2, 0.0, 0.0, 0.0, 0.0, 0.0, "x"))


# ---------------------------------------------------------------------------
# Entrenamiento
# ---------------------------------------------------------------------------

def prueba_validacion(datos):
    from helpers.net3d2d import build
    raiz, ids = datos
    perdida, dice_medio = validate(build(CONFIG_RED, 0), ids[:2], raiz)
    assert perdida > 0.0 and 0.0 <= dice_medio <= 1.0
    with pytest.raises(ConfigError):
        validate(build(CONFIG_RED, 0), [], raiz)


def prueba_entrenamiento_escribe_checkpoints(datos, tmp_path):
    raiz, ids = datos
    salida = os.path.join(tmp_path, "corrida")
    epocas = []
    params, log = train(CONFIG_RED, TrainConfig(max_epochs=2, learning_rate=1e-3), Pliegue(ids[:2], ids[2:], []),
                        raiz, salida, al_terminar_epoca=epocas.append)
    assert [r.epoch for r in log.registros] == [1, 2] == [r.epoch for r in epocas]
    assert os.path.exists(os.path.join(salida, "epoca_0002.ckpt"))
    assert os.path.exists(os.path.join(salida, ARCHIVO_LOG))
    assert os.path.exists(os.path.join(salida, ARCHIVO_OPTIMIZADOR))
    assert log.mejor is not None and params.config == CONFIG_RED
    # 2 escaneos de 16×16×4
    assert log.registros[0].train_loss_mean == pytest.approx(log.registros[0].train_loss_sum / (2 * 4 * 256))


def prueba_parada_temprana(datos, tmp_path):
    raiz, ids = datos
    _, log = train(CONFIG_RED, TrainConfig(max_epochs=10, patience=2), Pliegue(ids[:1], [], []),
                   raiz, os.path.join(tmp_path, "corrida"), validacion=lambda p: (1.0, 0.5))
    assert [r.epoch for r in log.registros] == [1, 2, 3]
    assert log.mejor_epoca == 1


def prueba_solo_quedan_mejor_y_ultimo_checkpoint(datos, tmp_path):
    raiz, ids = datos
    salida = os.path.join(tmp_path, "corrida")
    perdidas = iter([0.5, 0.4, 0.6, 0.7])
    _, log = train(CONFIG_RED, TrainConfig(max_epochs=4, patience=5), Pliegue(ids[:1], [], []), raiz, salida,
                   validacion=lambda p: (next(perdidas), 0.5))
    assert log.mejor_epoca == 2
    assert sorted(n for n in os.listdir(salida) if n.endswith(".ckpt")) == ["epoca_0002.ckpt", "epoca_0004.ckpt"]


def prueba_cache_de_pesos_acotado(datos, tmp_path):
    raiz, ids = datos
    cache = MapaPesosCache(max_size=3)
    train(CONFIG_RED, TrainConfig(max_epochs=1), Pliegue(ids[:2], [], []), raiz, os.path.join(tmp_path, "corrida"),
          validacion=lambda p: (1.0, 0.5), cache_pesos=cache)
    # 2 escaneos de 4 rebanadas, ninguna repetida en la primera época
    assert cache.estadisticas()["fallos"] == 8
    assert cache.estadisticas()["entradas"] <= 3


def prueba_la_perdida_baja_en_veinte_epocas(datos, tmp_path):
    raiz, ids = datos
    config = TrainConfig(max_epochs=20, patience=50, learning_rate=1e-2, dropout_p=0.0)
    _, log = train(CONFIG_RED, config, Pliegue(ids[:2], [], []), raiz, os.path.join(tmp_path, "corrida"),
                   validacion=lambda p: (1.0, 0.5))
    assert len(log.registros) == 20
    assert log.registros[-1].train_loss_mean < log.registros[0].train_loss_mean


def prueba_entrenamiento_determinista(datos, tmp_path):
    raiz, ids = datos
    config = TrainConfig(max_epochs=2, learning_rate=1e-3, seed=4)
    fold = Pliegue(ids[:2], ids[2:], [])
    _, log_a = train(CONFIG_RED, config, fold, raiz, os.path.join(tmp_path, "a"), rotaciones=[0, 10])
    _, log_b = train(CONFIG_RED, config, fold, raiz, os.path.join(tmp_path, "b"), rotaciones=[0, 10])
    assert _sin_segundos(log_a).equals(_sin_segundos(log_b))
    _, log_c = train(CONFIG_RED, TrainConfig(max_epochs=2, learning_rate=1e-3, seed=5), fold, raiz,
                     os.path.join(tmp_path, "c"), rotaciones=[0, 10])
    assert not _sin_segundos(log_a).equals(_sin_segundos(log_c))


def prueba_reanudacion_igual_a_corrida_completa(datos, tmp_path):
    raiz, ids = datos
    fold = Pliegue(ids[:2], ids[2:], [])
    _, completo = train(CONFIG_RED, TrainConfig(max_epochs=3, learning_rate=1e-3), fold, raiz,
                        os.path.join(tmp_path, "completo"))
    salida = os.path.join(tmp_path, "interrumpido")
    train(CONFIG_RED, TrainConfig(max_epochs=1, learning_rate=1e-3), fold, raiz, salida)
    _, reanudado = train(CONFIG_RED, TrainConfig(max_epochs=3, learning_rate=1e-3), fold, raiz, salida,
                         reanudar=True)
    assert _sin_segundos(reanudado).equals(_sin_segundos(completo))


def prueba_divergencia(tmp_path):
    raiz = os.path.join(tmp_path, "datos")
    mascara = np.zeros((16, 16, 3), dtype=np.uint8)
    mascara[4:10, 4:10] = 1
    guardar_escaneo(ScanRecord("nan01", np.full((16, 16, 3), np.nan), mascara), raiz)
    with pytest.raises(EntrenamientoError) as info:
        train(CONFIG_RED, TrainConfig(max_epochs=1), Pliegue(["nan01"], [], []), raiz,
              os.path.join(tmp_path, "corrida"), validacion=lambda p: (1.0, 0.0))
    assert info.value.detalles["epoca"] == 1 and info.value.detalles["paso"] == 0


def prueba_pliegue_sin_entrenamiento(datos, tmp_path):
    raiz, ids = datos
    with pytest.raises(ConfigError):
        train(CONFIG_RED, TrainConfig(max_epochs=1), Pliegue([], ids, []), raiz, os.path.join(tmp_path, "x"))


@pytest.mark.lento
def prueba_sobreajuste_sintetico(tmp_path):
    raiz = os.path.join(tmp_path, "datos")
    ids = escribir_conjunto_sintetico(raiz, cantidad=10, forma=(32, 32, 9), seed=0)
    red = NetworkConfig(input_height=32, input_width=32, input_depth=9, stages=2,
                        channels=(4, 8, 16), convs_per_stage=2, dropout_p=0.0)
    config = TrainConfig(max_epochs=200, patience=200, learning_rate=1e-3, seed=0)
    params, _ = train(red, config, Pliegue(ids, ids[:2], []), raiz, os.path.join(tmp_path, "corrida"))

    escaneos = [cargar_escaneo(raiz, s) for s in ids]
    sin_crf = [segment_volume(params, s)[1].dice_pre for s in escaneos]
    con_crf = [segment_volume(params, s, CrfParams(theta_alpha=5.0))[1].dice_post for s in escaneos]
    assert np.mean(sin_crf) >= 0.95
    assert np.mean(con_crf) >= np.mean(sin_crf) - 0.01
