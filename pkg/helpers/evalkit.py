#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Evaluación: segmentación de volúmenes completos deslizando la red sobre cada
rebanada, índice Dice, normalización de tiempos y emisión de reportes.
"""

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict
from typing import List, Optional, Sequence, Tuple
import numpy as np
import pandas as pd
from config import PROB_THRESHOLD, TIMING_SLICES, TIMING_HEIGHT, TIMING_WIDTH, THREADS
from helpers.crf_refine import CrfParams, refine, reescalar_gris
from helpers.dataio import ScanRecord, clamp_hu, normalize_hu, extract_window
from helpers.error_handler import ConfigError
from helpers.logger import Logger, log_metrica
from helpers.net3d2d import NetworkParams, forward
from helpers.weightmap_loss import boundary_pixels

logger = Logger.get_logger()

COLUMNAS_REPORTE = ["scan_id", "dice_pre", "dice_post", "net_seconds", "crf_seconds", "normalized_seconds"]


@dataclass
class SegmentationReport:
    """Resultado de segmentar un escaneo."""

    scan_id: str
    dice_pre: Optional[float]
    dice_post: Optional[float]
    net_seconds: float
    crf_seconds: Optional[float]
    normalized_seconds: float
    slices: int = 0

    def a_linea(self) -> str:
        """Formato de línea: campos separados por tabuladores, vacío si no aplica."""
        valores = []
        for columna in COLUMNAS_REPORTE:
            v = getattr(self, columna)
            valores.append("" if v is None else (v if isinstance(v, str) else f"{v:.6f}"))
        return "\t".join(valores)


def dice(a, b) -> float:
    """
    Índice Dice 2|A∩B| / (|A|+|B|); vale 1.0 si ambos están vacíos.

    Args:
        a, b: Volúmenes binarios de igual forma

    Returns:
        float: Dice en [0, 1]
    """
    x = np.asarray(a).astype(bool)
    y = np.asarray(b).astype(bool)
    if x.shape != y.shape:
        raise ConfigError("dice requiere formas iguales", {"a": x.shape, "b": y.shape})
    total = int(x.sum()) + int(y.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(x, y).sum()) / total


def timing_normalize(seconds: float, slices: int, H: int, W: int) -> float:
    """Segundos equivalentes a 100 rebanadas de 512×512."""
    if slices <= 0 or H <= 0 or W <= 0:
        raise ConfigError("timing_normalize requiere conteos positivos", {"slices": slices, "H": H, "W": W})
    return seconds * (TIMING_SLICES / slices) * (TIMING_HEIGHT * TIMING_WIDTH) / (H * W)


def _en_paralelo(funcion, indices: Sequence[int], hilos: int) -> list:
    if hilos <= 1:
        return [funcion(i) for i in indices]
    with ThreadPoolExecutor(max_workers=hilos) as pool:
        return list(pool.map(funcion, indices))


def probability_volume(params: NetworkParams, scan: ScanRecord, hilos: int = THREADS) -> Tuple[np.ndarray, float]:
    """
    Mapa de probabilidades [2, H, W, Z] de todas las rebanadas del escaneo.

    Returns:
        tuple: (probabilidades, segundos de la pasada de red)
    """
    D = params.config.input_depth
    inicio = time.perf_counter()
    volumen = normalize_hu(scan.volume)

    def rebanada(z: int) -> np.ndarray:
        return forward(params, extract_window(volumen, z, D), mode="infer")

    mapas = _en_paralelo(rebanada, range(scan.depth), hilos)
    segundos = time.perf_counter() - inicio
    return np.stack(mapas, axis=-1), segundos


def segment_volume(params: NetworkParams, scan: ScanRecord, crf_params: Optional[CrfParams] = None,
                   hilos: int = THREADS, threshold: float = PROB_THRESHOLD,
                   probs: Optional[Tuple[np.ndarray, float]] = None,
                   con_verdad: bool = True) -> Tuple[np.ndarray, SegmentationReport]:
    """
    Segmenta un escaneo completo, opcionalmente refinando cada rebanada con CRF.

    Args:
        params (NetworkParams): Red entrenada
        scan (ScanRecord): Escaneo (su máscara es la verdad si con_verdad)
        crf_params (CrfParams, optional): Activa el refinamiento
        hilos (int): Tamaño del grupo de hilos por rebanada
        threshold (float): Umbral de binarización
        probs (tuple, optional): (probabilidades, segundos) ya calculados
        con_verdad (bool): Calcular Dice contra scan.mask

    Returns:
        tuple: (máscara H×W×Z uint8, SegmentationReport)
    """
    probabilidades, segundos_red = probs if probs is not None else probability_volume(params, scan, hilos)
    mascara = (probabilidades[1] > threshold).astype(np.uint8)
    dice_pre = dice(mascara, scan.mask) if con_verdad else None

    dice_post, segundos_crf = None, None
    if crf_params is not None:
        inicio = time.perf_counter()
        intensidades = clamp_hu(scan.volume)

        def refinar(z: int) -> np.ndarray:
            return refine(probabilidades[..., z], reescalar_gris(intensidades[:, :, z]), crf_params, threshold)

        mascara = np.stack(_en_paralelo(refinar, range(scan.depth), hilos), axis=-1)
        segundos_crf = time.perf_counter() - inicio
        dice_post = dice(mascara, scan.mask) if con_verdad else None

    H, W, Z = scan.volume.shape
    reporte = SegmentationReport(
        scan_id=scan.scan_id,
        dice_pre=dice_pre,
        dice_post=dice_post,
        net_seconds=segundos_red,
        crf_seconds=segundos_crf,
        normalized_seconds=timing_normalize(segundos_red + (segundos_crf or 0.0), Z, H, W),
        slices=Z,
    )
    log_metrica("dice_pre", dice_pre if dice_pre is not None else "n/a", {"scan_id": scan.scan_id})
    if crf_params is not None:
        log_metrica("dice_post", dice_post if dice_post is not None else "n/a", {"scan_id": scan.scan_id})
    return mascara, reporte


def tabla_reportes(reportes: List[SegmentationReport]) -> pd.DataFrame:
    """Reportes como DataFrame, con una fila de medias si hay más de uno."""
    tabla = pd.DataFrame([asdict(r) for r in reportes], columns=COLUMNAS_REPORTE)
    if len(reportes) > 1:
        medias = tabla[COLUMNAS_REPORTE[1:]].apply(pd.to_numeric, errors="coerce").mean()
        tabla.loc[len(tabla)] = ["media"] + medias.tolist()
    return tabla


def formatear_tabla(reportes: List[SegmentationReport]) -> str:
    tabla = tabla_reportes(reportes)
    return tabla.to_string(index=False, na_rep="-", float_format=lambda v: f"{v:.4f}")


def lineas_reporte(reportes: List[SegmentationReport]) -> List[str]:
    return [r.a_linea() for r in reportes]


def escribir_overlay_ppm(imagen, prediccion, verdad, path: str) -> str:
    """
    Escribe una rebanada en gris con el borde predicho en rojo y el borde
    verdadero en verde (amarillo donde coinciden), como PPM binario.

    Args:
        imagen: Intensidades H×W
        prediccion: Máscara binaria H×W predicha
        verdad: Máscara binaria H×W de referencia (o None)
        path (str): Ruta de destino

    Returns:
        str: Ruta escrita
    """
    gris = np.round(reescalar_gris(imagen)).astype(np.uint8)
    rgb = np.repeat(gris[..., None], 3, axis=-1)
    if verdad is not None:
        borde_v = boundary_pixels(np.asarray(verdad, dtype=np.uint8))
        rgb[borde_v] = (0, 255, 0)
    else:
        borde_v = np.zeros(gris.shape, dtype=bool)
    borde_p = boundary_pixels(np.asarray(prediccion, dtype=np.uint8))
    rgb[borde_p] = (255, 0, 0)
    rgb[borde_p & borde_v] = (255, 255, 0)

    directorio = os.path.dirname(path)
    if directorio:
        os.makedirs(directorio, exist_ok=True)
    H, W = gris.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{W} {H}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(rgb).tobytes())
    return path


def emitir_overlays(scan: ScanRecord, mascara: np.ndarray, directorio: str,
                    con_verdad: bool = True) -> List[str]:
    """Un PPM por rebanada del escaneo."""
    intensidades = clamp_hu(scan.volume)
    return [
        escribir_overlay_ppm(intensidades[:, :, z], mascara[:, :, z],
                             scan.mask[:, :, z] if con_verdad else None,
                             os.path.join(directorio, f"{scan.scan_id}_z{z:04d}.ppm"))
        for z in range(scan.depth)
    ]
