#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Logging centralizado del segmentador.

Un único logger `voxelseg` con cuatro destinos: consola coloreada,
`voxelseg.log` (JSON, todo), `errores.log` (JSON, ERROR y superiores) y
`entrenamiento.log` (JSON, solo las épocas). Los datos estructurados viajan
en `extra={"detalles": {...}}`.
"""

import os
import json
import logging
import threading
from logging.handlers import RotatingFileHandler
from typing import Dict, Any, Optional, Union
from colorama import Fore, Style
from config import LOG_DIR
from helpers.logging_config.config import (
    METRICA, EPOCA, get_logging_config, update_logging_config, get_log_level_from_name
)

logging.addLevelName(METRICA, "METRICA")
logging.addLevelName(EPOCA, "EPOCA")


def _a_json(valor: Any) -> Any:
    # Escalares y arreglos de numpy, tuplas de formas, rutas
    if hasattr(valor, "tolist"):
        return valor.tolist()
    return str(valor)


class JsonFormatter(logging.Formatter):
    """Una línea JSON por registro."""

    def format(self, record):
        datos = {
            "momento": self.formatTime(record, "%Y-%m-%dT%H:%M:%S"),
            "nivel": record.levelname,
            "mensaje": record.getMessage(),
            "origen": f"{record.module}.{record.funcName}:{record.lineno}",
            "hilo": record.threadName,
        }
        detalles = getattr(record, "detalles", None)
        if detalles:
            datos["detalles"] = detalles
        if record.exc_info:
            datos["excepcion"] = self.formatException(record.exc_info)
        return json.dumps(datos, ensure_ascii=False, default=_a_json)


class ColoredConsoleFormatter(logging.Formatter):
    """Colorea la línea completa según el nivel."""

    COLORS = {
        "DEBUG": Style.DIM,
        "METRICA": Fore.MAGENTA,
        "INFO": Fore.CYAN,
        "EPOCA": Fore.GREEN,
        "WARNING": Fore.YELLOW,
        "ERROR": Fore.RED,
        "CRITICAL": Fore.RED + Style.BRIGHT,
    }

    def format(self, record):
        return f"{self.COLORS.get(record.levelname, '')}{super().format(record)}{Style.RESET_ALL}"


class _SoloNivel(logging.Filter):
    def __init__(self, nivel: int):
        super().__init__()
        self.nivel = nivel

    def filter(self, record):
        return record.levelno == self.nivel


class Logger:
    """
    Singleton del logger del segmentador.
    """

    _logger: Optional[logging.Logger] = None
    _console_handler: Optional[logging.Handler] = None
    _lock = threading.Lock()

    @classmethod
    def get_logger(cls) -> logging.Logger:
        """
        Obtiene la instancia del logger (singleton).

        Returns:
            logging.Logger: Logger `voxelseg`
        """
        if cls._logger is None:
            with cls._lock:
                if cls._logger is None:
                    cls._setup_logger()
        return cls._logger

    @staticmethod
    def _archivo(nombre: str, nivel: int, config: Dict[str, Any], max_bytes: Optional[int] = None,
                 filtro: Optional[logging.Filter] = None) -> logging.Handler:
        handler = RotatingFileHandler(os.path.join(LOG_DIR, nombre), maxBytes=max_bytes or config["max_bytes"],
                                      backupCount=config["copias"], encoding="utf-8")
        handler.setLevel(nivel)
        handler.setFormatter(JsonFormatter())
        if filtro is not None:
            handler.addFilter(filtro)
        return handler

    @classmethod
    def _setup_logger(cls):
        config = get_logging_config()
        logger = logging.getLogger("voxelseg")
        logger.setLevel(logging.DEBUG)
        logger.propagate = False

        if not logger.handlers:
            os.makedirs(LOG_DIR, exist_ok=True)
            consola = logging.StreamHandler()
            consola.setLevel(config["consola"])
            consola.setFormatter(ColoredConsoleFormatter("%(asctime)s %(levelname)-8s %(message)s", "%H:%M:%S"))
            logger.addHandler(cls._archivo("voxelseg.log", config["general"], config))
            logger.addHandler(cls._archivo("errores.log", config["errores"], config, config["max_bytes"] // 2))
            logger.addHandler(cls._archivo("entrenamiento.log", config["epocas"], config,
                                           filtro=_SoloNivel(EPOCA)))
            logger.addHandler(consola)

        cls._console_handler = next((h for h in logger.handlers if type(h) is logging.StreamHandler), None)
        cls._logger = logger

    @classmethod
    def log_epoca(cls, registro: Dict[str, Any]) -> None:
        """
        Registra el resumen de una época en el nivel EPOCA.

        Args:
            registro (dict): epoca, perdida_suma, perdida_media,
                perdida_validacion, dice_validacion y segundos
        """
        nan = float("nan")
        cls.get_logger().log(
            EPOCA,
            f"Época {registro.get('epoca')}: perdida_media={registro.get('perdida_media', nan):.6f} "
            f"val_loss={registro.get('perdida_validacion', nan):.6f} "
            f"val_dice={registro.get('dice_validacion', nan):.4f} ({registro.get('segundos', nan):.1f} s)",
            extra={"detalles": dict(registro)},
        )

    @classmethod
    def log_metrica(cls, nombre: str, valor: Union[int, float, str],
                    contexto: Optional[Dict[str, Any]] = None) -> None:
        """
        Registra una métrica numérica en el nivel METRICA.

        Args:
            nombre (str): Nombre de la métrica
            valor: Valor (los escalares de numpy se convierten)
            contexto (dict, optional): Datos que acompañan a la métrica
        """
        if hasattr(valor, "item"):
            valor = valor.item()
        detalles: Dict[str, Any] = {"metrica": nombre, "valor": valor}
        if contexto:
            detalles["contexto"] = contexto
        cls.get_logger().log(METRICA, f"{nombre} = {valor}", extra={"detalles": detalles})

    @classmethod
    def log_error(cls, mensaje: str, error: Optional[Exception] = None,
                  detalles: Optional[Dict[str, Any]] = None) -> None:
        """
        Registra un error con la excepción original, si la hay.

        Args:
            mensaje (str): Descripción
            error (Exception, optional): Excepción original
            detalles (dict, optional): Datos adicionales
        """
        datos = dict(detalles or {})
        if error is not None:
            datos["tipo_error"] = type(error).__name__
            datos.update(getattr(error, "detalles", None) or {})
        cls.get_logger().error(mensaje, exc_info=error, extra={"detalles": datos})

    @classmethod
    def set_log_level(cls, level_name: str) -> bool:
        """
        Cambia el nivel de la consola.

        Args:
            level_name (str): DEBUG, METRICA, INFO, EPOCA, WARNING, ERROR o CRITICAL

        Returns:
            bool: False si el nombre no es un nivel conocido
        """
        nivel = get_log_level_from_name(level_name)
        if nivel is None:
            return False
        update_logging_config({"consola": nivel})
        cls.get_logger()
        if cls._console_handler is not None:
            cls._console_handler.setLevel(nivel)
        return True


def log_epoca(registro: Dict[str, Any]) -> None:
    Logger.log_epoca(registro)


def log_metrica(nombre: str, valor: Union[int, float, str],
                contexto: Optional[Dict[str, Any]] = None) -> None:
    Logger.log_metrica(nombre, valor, contexto)


def log_error(mensaje: str, error: Optional[Exception] = None,
              detalles: Optional[Dict[str, Any]] = None) -> None:
    Logger.log_error(mensaje, error, detalles)


def set_log_level(level_name: str) -> bool:
    return Logger.set_log_level(level_name)
