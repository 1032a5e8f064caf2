#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Pruebas del logging estructurado y del manejo de errores.
"""

import json
import logging
import numpy as np
from helpers.error_handler import ErrorHandler, CheckpointError, ConfigError, SALIDA_DOMINIO, SALIDA_USO
from helpers.logger import EPOCA, METRICA, JsonFormatter, Logger, _SoloNivel, set_log_level


def _registro(nivel, mensaje, detalles=None):
    registro = logging.LogRecord("voxelseg", nivel, __file__, 10, mensaje, None, None, func="prueba")
    if detalles is not None:
        registro.detalles = detalles
    return registro


def prueba_formato_json_con_numpy():
    linea = JsonFormatter().format(_registro(METRICA, "dice", {"forma": (2, 3), "valor": np.float64(0.5),
                                                               "pesos": np.ones(2)}))
    datos = json.loads(linea)
    assert datos["nivel"] == "METRICA" and datos["mensaje"] == "dice"
    assert datos["detalles"] == {"forma": [2, 3], "valor": 0.5, "pesos": [1.0, 1.0]}


def prueba_filtro_de_epocas():
    filtro = _SoloNivel(EPOCA)
    assert filtro.filter(_registro(EPOCA, "época"))
    assert not filtro.filter(_registro(logging.ERROR, "error"))


def prueba_nivel_de_consola():
    assert set_log_level("debug")
    assert Logger._console_handler.level == logging.DEBUG
    assert not set_log_level("RUIDOSO")
    assert set_log_level("INFO")


def prueba_codigos_de_salida(capsys):
    info = ErrorHandler.handle_error(CheckpointError("incompatible", {"diferencias": []}), log_error=False)
    assert ErrorHandler.codigo_salida(info) == SALIDA_USO
    info = ErrorHandler.handle_error(ConfigError("k inválido"), log_error=False)
    assert ErrorHandler.codigo_salida(info) == SALIDA_DOMINIO
    assert ErrorHandler.codigo_salida(info, en_configuracion=True) == SALIDA_USO
    info = ErrorHandler.handle_error(FileNotFoundError("falta"), log_error=False)
    assert info["tipo"] == "DatosError" and ErrorHandler.codigo_salida(info) == SALIDA_USO
    assert "falta" in capsys.readouterr().err
