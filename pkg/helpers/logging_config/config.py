#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Niveles y rotación de los destinos de log del segmentador.
"""

import logging

METRICA = 15
EPOCA = 25

NIVELES = {
    "DEBUG": logging.DEBUG,
    "METRICA": METRICA,
    "INFO": logging.INFO,
    "EPOCA": EPOCA,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
    "CRITICAL": logging.CRITICAL,
}

DEFAULT_CONFIG = {
    "consola": logging.INFO,
    # voxelseg.log recibe todo, incluidas las métricas
    "general": logging.DEBUG,
    "errores": logging.ERROR,
    # entrenamiento.log solo recibe registros EPOCA
    "epocas": EPOCA,
    "max_bytes": 10 * 1024 * 1024,
    "copias": 5,
}


def get_logging_config():
    """
    Obtiene la configuración actual de logging.

    Returns:
        dict: Copia de la configuración
    """
    return DEFAULT_CONFIG.copy()


def update_logging_config(new_config):
    """
    Actualiza la configuración de logging; las claves desconocidas se ignoran.

    Args:
        new_config (dict): Valores a cambiar

    Returns:
        dict: Configuración actualizada
    """
    DEFAULT_CONFIG.update({k: v for k, v in new_config.items() if k in DEFAULT_CONFIG})
    return DEFAULT_CONFIG.copy()


def get_log_level_from_name(level_name):
    """Nivel numérico de un nombre (incluye METRICA y EPOCA); None si no existe."""
    return NIVELES.get(str(level_name).upper())
