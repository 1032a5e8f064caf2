#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Base de los cachés en disco: entradas en memoria, contadores de aciertos,
recorte por tamaño y un manifiesto JSON versionado que se escribe de forma
atómica.
"""

import json
import os
from typing import Any, Dict, Optional
from helpers.logger import Logger

logger = Logger.get_logger()

FORMATO_MANIFIESTO = "voxelseg-cache"
VERSION_MANIFIESTO = 1


class BaseCache:
    """
    Caché con manifiesto opcional. Las subclases deciden qué guarda cada
    entrada; aquí solo se cuentan aciertos y se persiste el diccionario.
    """

    def __init__(self, max_size: Optional[int] = None, cache_file: Optional[str] = None):
        """
        Args:
            max_size (int, optional): Entradas máximas en memoria (None = sin límite)
            cache_file (str, optional): Ruta del manifiesto JSON
        """
        self.cache: Dict[str, Any] = {}
        self.max_size = max_size
        self.cache_file = cache_file
        self.aciertos = 0
        self.fallos = 0

    def estadisticas(self) -> Dict[str, Any]:
        consultas = self.aciertos + self.fallos
        return {
            "entradas": len(self.cache),
            "max_size": self.max_size,
            "aciertos": self.aciertos,
            "fallos": self.fallos,
            "tasa_aciertos": self.aciertos / consultas if consultas else 0.0,
        }

    def _recortar(self) -> None:
        # Sale primero la entrada más antigua
        while self.max_size is not None and len(self.cache) > self.max_size:
            del self.cache[next(iter(self.cache))]

    def guardar_manifiesto(self) -> bool:
        """
        Escribe el manifiesto en un temporal y lo renombra.

        Returns:
            bool: False si no hay manifiesto o no se pudo escribir
        """
        if not self.cache_file:
            return False
        documento = {"formato": FORMATO_MANIFIESTO, "version": VERSION_MANIFIESTO, "entradas": self.cache}
        temporal = f"{self.cache_file}.tmp"
        try:
            os.makedirs(os.path.dirname(self.cache_file) or ".", exist_ok=True)
            with open(temporal, "w", encoding="utf-8") as f:
                json.dump(documento, f, ensure_ascii=False, indent=2)
            os.replace(temporal, self.cache_file)
        except OSError as e:
            logger.warning(f"No se pudo escribir el manifiesto {self.cache_file}: {e}")
            return False
        return True

    def cargar_manifiesto(self) -> bool:
        """
        Carga las entradas del manifiesto. Un manifiesto ilegible o de otro
        formato se ignora y el caché empieza vacío.

        Returns:
            bool: True si se cargaron entradas
        """
        if not self.cache_file or not os.path.exists(self.cache_file):
            return False
        try:
            with open(self.cache_file, "r", encoding="utf-8") as f:
                documento = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            logger.warning(f"Manifiesto ilegible, se ignora: {self.cache_file} ({e})")
            return False
        if not isinstance(documento, dict) or documento.get("formato") != FORMATO_MANIFIESTO \
                or documento.get("version") != VERSION_MANIFIESTO:
            logger.warning(f"Manifiesto con formato desconocido, se ignora: {self.cache_file}")
            return False
        self.cache = dict(documento.get("entradas") or {})
        logger.debug(f"Manifiesto {self.cache_file}: {len(self.cache)} entradas")
        return True
