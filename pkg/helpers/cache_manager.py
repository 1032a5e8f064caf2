#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Cachés en disco del segmentador.
AumentoCache materializa las siete rotaciones de cada escaneo en el
directorio de caché y lleva un manifiesto para que la aumentación sea
idempotente. MapaPesosCache guarda los mapas de peso por rebanada como
volúmenes de una sola rebanada.
"""

import os
from typing import List, Optional
import numpy as np
from config import CACHE_DIR, ROTATION_ANGLES, WEIGHT_CACHE_MAX_ENTRIES
from helpers.base_cache import BaseCache
from helpers.dataio import (
    ScanRecord, augment_all, guardar_escaneo, id_aumentado, save_volume, load_volume, MODALIDAD_PESOS
)
from helpers.logger import Logger
from helpers.weightmap_loss import LossParams, weight_map

logger = Logger.get_logger()


class AumentoCache(BaseCache):
    """
    Caché de escaneos aumentados. El directorio es a su vez una raíz de
    datos: cada variante rotada se guarda como `<id>_rot±θ.vol` con su máscara.
    """

    def __init__(self, directorio: Optional[str] = None):
        """
        Inicializa el caché de aumentación.

        Args:
            directorio (str, optional): Directorio de caché (por defecto CACHE_DIR/aumentados)
        """
        self.directorio = directorio or os.path.join(CACHE_DIR, "aumentados")
        super().__init__(cache_file=os.path.join(self.directorio, "manifiesto.json"))
        self.cargar_manifiesto()

    def contiene(self, scan_id: str) -> bool:
        """Indica si la variante está registrada y sus dos archivos existen."""
        entrada = self.cache.get(scan_id)
        presente = (entrada is not None and os.path.exists(entrada["volumen"])
                    and os.path.exists(entrada["mascara"]))
        if presente:
            self.aciertos += 1
        else:
            self.fallos += 1
        return presente

    def pendientes(self, scan_id: str, angulos=ROTATION_ANGLES) -> List[int]:
        return [a for a in angulos if not self.contiene(id_aumentado(scan_id, a))]

    def materializar(self, registro: ScanRecord, angulos=ROTATION_ANGLES) -> int:
        """
        Escribe las rotaciones que falten de un escaneo.

        Args:
            registro (ScanRecord): Escaneo original
            angulos: Ángulos a materializar

        Returns:
            int: Número de archivos de volumen nuevos (volumen + máscara cuentan como uno)
        """
        faltan = self.pendientes(registro.scan_id, angulos)
        if not faltan:
            return 0
        for rotado in augment_all(registro, faltan):
            ruta_v, ruta_m = guardar_escaneo(rotado, self.directorio)
            self.cache[rotado.scan_id] = {
                "original": registro.scan_id,
                "angulo": rotado.angle,
                "procedencia": rotado.provenance,
                "volumen": ruta_v,
                "mascara": ruta_m,
            }
        self.guardar_manifiesto()
        logger.debug(f"Escaneo {registro.scan_id}: {len(faltan)} rotaciones materializadas")
        return len(faltan)

    def variantes(self, scan_id: str) -> List[str]:
        """Identificadores aumentados registrados de un escaneo original."""
        return sorted(k for k, v in self.cache.items() if v["original"] == scan_id)


class MapaPesosCache(BaseCache):
    """
    Caché de mapas de peso por (escaneo, rebanada). Sin directorio vive solo
    en memoria; con directorio persiste cada mapa como volumen float32 de una
    rebanada y devuelve siempre valores redondeados a float32, de modo que
    un acierto y un fallo producen el mismo mapa. En memoria retiene a lo
    sumo `max_size` mapas.
    """

    def __init__(self, params: LossParams = LossParams(), directorio: Optional[str] = None,
                 max_size: Optional[int] = WEIGHT_CACHE_MAX_ENTRIES):
        self.params = params
        self.directorio = directorio
        super().__init__(max_size=max_size)

    def _ruta(self, scan_id: str, rebanada: int) -> str:
        etiqueta = f"w{self.params.w0:g}_s{self.params.sigma:g}{'_cuad' if self.params.squared_distance else ''}"
        return os.path.join(self.directorio, etiqueta, f"{scan_id}_z{rebanada:04d}_pesos.vol")

    def obtener(self, scan_id: str, rebanada: int, mascara: np.ndarray) -> np.ndarray:
        """
        Mapa de pesos de una rebanada, calculándolo si no está en caché.

        Args:
            scan_id (str): Identificador del escaneo
            rebanada (int): Índice de la rebanada
            mascara: Máscara binaria H×W de esa rebanada

        Returns:
            numpy.ndarray: Pesos H×W
        """
        clave = f"{scan_id}:{rebanada}"
        if clave in self.cache:
            self.aciertos += 1
            return self.cache[clave]

        pesos = None
        if self.directorio:
            ruta = self._ruta(scan_id, rebanada)
            if os.path.exists(ruta):
                pesos = load_volume(ruta).data[..., 0].astype(np.float64)
        if pesos is None:
            self.fallos += 1
            pesos = weight_map(mascara, self.params).weights
            if self.directorio:
                pesos = pesos.astype(np.float32).astype(np.float64)
                save_volume(pesos[..., None], self._ruta(scan_id, rebanada),
                            modality=MODALIDAD_PESOS, dtype_tag=1)
        else:
            self.aciertos += 1

        self.cache[clave] = pesos
        self._recortar()
        return pesos
