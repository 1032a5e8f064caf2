#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Conjunto sintético de elipsoides con ruido aditivo, en unidades Hounsfield.
Sirve para las pruebas y para la corrida de sobreajuste de aceptación.
"""

from typing import List, Tuple
import numpy as np
from helpers.dataio import ScanRecord, guardar_escaneo
from helpers.logger import Logger

logger = Logger.get_logger()

HU_ORGANO = 120.0
HU_FONDO = -80.0


def generar_elipsoide(forma: Tuple[int, int, int] = (32, 32, 9), seed: int = 0,
                      ruido_hu: float = 20.0, scan_id: str = "sint00") -> ScanRecord:
    """
    Escaneo con un elipsoide de centro y semiejes aleatorios.

    Args:
        forma (tuple): (H, W, Z)
        seed (int): Semilla
        ruido_hu (float): Desviación del ruido gaussiano aditivo
        scan_id (str): Identificador

    Returns:
        ScanRecord: Volumen en HU y máscara del elipsoide
    """
    H, W, Z = forma
    rng = np.random.default_rng(seed)
    centro = np.array([H, W, Z], dtype=np.float64) / 2.0 + rng.uniform(-0.1, 0.1, 3) * [H, W, 0]
    semiejes = np.array([H * rng.uniform(0.2, 0.32), W * rng.uniform(0.2, 0.32), Z * rng.uniform(0.45, 0.7)])
    y, x, z = np.meshgrid(np.arange(H) + 0.5, np.arange(W) + 0.5, np.arange(Z) + 0.5, indexing="ij")
    radio = ((y - centro[0]) / semiejes[0]) ** 2 + ((x - centro[1]) / semiejes[1]) ** 2 + \
            ((z - centro[2]) / semiejes[2]) ** 2
    mascara = (radio <= 1.0).astype(np.uint8)
    volumen = np.where(mascara == 1, HU_ORGANO, HU_FONDO) + rng.normal(0.0, ruido_hu, forma)
    return ScanRecord(scan_id, volumen, mascara)


def escribir_conjunto_sintetico(raiz: str, cantidad: int = 10, forma: Tuple[int, int, int] = (32, 32, 9),
                                seed: int = 0, ruido_hu: float = 20.0) -> List[str]:
    """
    Escribe `cantidad` escaneos sintéticos con sus máscaras.

    Returns:
        list: Identificadores escritos
    """
    ids = []
    for i in range(cantidad):
        registro = generar_elipsoide(forma, seed + i, ruido_hu, scan_id=f"sint{i:02d}")
        guardar_escaneo(registro, raiz)
        ids.append(registro.scan_id)
    logger.info(f"Conjunto sintético escrito en {raiz}: {cantidad} escaneos {forma}")
    return ids
