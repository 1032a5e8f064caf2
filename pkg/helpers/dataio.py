#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Entrada/salida de volúmenes y preparación de datos.
Incluye el formato binario de volumen (cabecera + carga útil little-endian),
la carga de escaneos con su máscara, la normalización en unidades
Hounsfield, la aumentación por rotación axial, la extracción de ventanas de
rebanadas consecutivas y el plan de pliegues de validación cruzada.
"""

import os
import re
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union
import numpy as np
from scipy import ndimage as ndi
from config import (
    VOLUME_MAGIC, VOLUME_VERSION, VOLUME_EXTENSION, VOLUME_MAX_BYTES, MASK_SUFFIX,
    HU_MIN, HU_MAX, ROTATION_ANGLES, ROTATION_LIMIT
)
from helpers.error_handler import ConfigError, DatosError, FormatoError
from helpers.logger import Logger

logger = Logger.get_logger()

# magia, versión, H, W, D, espaciado (3 × f64), tipo, modalidad
_CABECERA = struct.Struct("<4sIIII3dBB")

DTYPE_TAGS = {0: np.dtype("<i2"), 1: np.dtype("<f4"), 2: np.dtype("u1")}

MODALIDAD_CT = 0
MODALIDAD_MASCARA = 1
MODALIDAD_PROBABILIDAD = 2
MODALIDAD_PESOS = 3

_PATRON_ROTADO = re.compile(r"^(?P<original>.+)_rot(?P<angulo>[+-]\d+)$")


@dataclass
class VolumeFile:
    """Contenido de un archivo de volumen: arreglo H×W×D y metadatos de cabecera."""

    data: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    dtype_tag: int = 1
    modality: int = MODALIDAD_CT

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape)


@dataclass
class ScanRecord:
    """Escaneo en unidades Hounsfield con su máscara binaria alineada."""

    scan_id: str
    volume: np.ndarray
    mask: np.ndarray
    provenance: str = "original"
    angle: float = 0.0
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.volume.shape != self.mask.shape:
            raise DatosError("El volumen y la máscara tienen formas distintas",
                             {"scan_id": self.scan_id, "volumen": self.volume.shape, "mascara": self.mask.shape})
        if not np.all((self.mask == 0) | (self.mask == 1)):
            raise DatosError("La máscara debe ser estrictamente 0/1", {"scan_id": self.scan_id})

    @property
    def depth(self) -> int:
        return int(self.volume.shape[2])


@dataclass
class Pliegue:
    train: List[str]
    validation: List[str]
    test: List[str]


@dataclass
class FoldPlan:
    """Plan de k pliegues sobre identificadores de escaneo."""

    k: int
    seed: int
    folds: List[Pliegue] = field(default_factory=list)

    def verificar(self) -> None:
        """Comprueba que los conjuntos de prueba particionan los escaneos y que no hay fugas."""
        prueba = [s for p in self.folds for s in p.test]
        if len(prueba) != len(set(prueba)):
            raise ConfigError("Los conjuntos de prueba se solapan")
        for i, p in enumerate(self.folds):
            test_orig = {id_original(s) for s in p.test}
            resto = {id_original(s) for s in p.train + p.validation}
            if test_orig & resto:
                raise ConfigError("Un escaneo de prueba aparece en entrenamiento",
                                  {"pliegue": i, "escaneos": sorted(test_orig & resto)})
            if set(p.train) & set(p.validation):
                raise ConfigError("Entrenamiento y validación se solapan", {"pliegue": i})

    def a_dict(self) -> Dict:
        return {"k": self.k, "seed": self.seed,
                "folds": [{"train": p.train, "validation": p.validation, "test": p.test} for p in self.folds]}


# ---------------------------------------------------------------------------
# Archivos de volumen
# ---------------------------------------------------------------------------

def _tag_para(arreglo: np.ndarray) -> int:
    if arreglo.dtype == np.bool_ or arreglo.dtype == np.uint8:
        return 2
    if np.issubdtype(arreglo.dtype, np.integer):
        return 0
    return 1


def save_volume(volumen: Union[VolumeFile, np.ndarray], path: str,
                spacing: Optional[Sequence[float]] = None, modality: Optional[int] = None,
                dtype_tag: Optional[int] = None) -> str:
    """
    Escribe un volumen H×W×D en el formato binario de volumen.

    Args:
        volumen: VolumeFile o arreglo H×W×D
        path (str): Ruta de destino
        spacing: Espaciado de vóxel en mm
        modality (int): Etiqueta de modalidad
        dtype_tag (int): 0 = int16, 1 = float32, 2 = uint8

    Returns:
        str: Ruta escrita
    """
    if isinstance(volumen, VolumeFile):
        datos = volumen.data
        spacing = volumen.spacing if spacing is None else spacing
        modality = volumen.modality if modality is None else modality
        dtype_tag = volumen.dtype_tag if dtype_tag is None else dtype_tag
    else:
        datos = np.asarray(volumen)
    if datos.ndim == 2:
        datos = datos[..., None]
    if datos.ndim != 3 or min(datos.shape) < 1:
        raise ConfigError("Un volumen debe ser H×W×D con dimensiones positivas", {"forma": datos.shape})
    spacing = tuple(float(s) for s in (spacing or (1.0, 1.0, 1.0)))
    modality = MODALIDAD_CT if modality is None else int(modality)
    dtype_tag = _tag_para(datos) if dtype_tag is None else int(dtype_tag)
    if dtype_tag not in DTYPE_TAGS:
        raise ConfigError(f"Etiqueta de tipo desconocida: {dtype_tag}")

    H, W, D = datos.shape
    carga = np.ascontiguousarray(np.transpose(datos, (2, 0, 1)).astype(DTYPE_TAGS[dtype_tag]))
    directorio = os.path.dirname(path)
    if directorio:
        os.makedirs(directorio, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_CABECERA.pack(VOLUME_MAGIC, VOLUME_VERSION, H, W, D, *spacing, dtype_tag, modality))
        f.write(carga.tobytes())
    return path


def load_volume(path: str) -> VolumeFile:
    """
    Lee un archivo de volumen.

    Args:
        path (str): Ruta del archivo

    Returns:
        VolumeFile: Arreglo H×W×D y metadatos
    """
    if not os.path.exists(path):
        raise DatosError(f"No existe el volumen {path}", {"path": path})
    with open(path, "rb") as f:
        cabecera = f.read(_CABECERA.size)
        if len(cabecera) < _CABECERA.size:
            raise DatosError("Cabecera de volumen truncada",
                             {"path": path, "bytes_esperados": _CABECERA.size, "bytes_leidos": len(cabecera)})
        magia, version, H, W, D, sx, sy, sz, tag, modalidad = _CABECERA.unpack(cabecera)
        if magia != VOLUME_MAGIC:
            raise FormatoError("Magia de volumen incorrecta", {"path": path, "magia": magia.hex()})
        if version != VOLUME_VERSION:
            raise FormatoError("Versión de volumen no soportada", {"path": path, "version": version})
        if tag not in DTYPE_TAGS:
            raise FormatoError("Etiqueta de tipo desconocida", {"path": path, "tag": tag})
        if min(H, W, D) < 1:
            raise FormatoError("Dimensiones de cabecera no positivas", {"path": path, "dims": (H, W, D)})
        esperado = H * W * D * DTYPE_TAGS[tag].itemsize
        if esperado > VOLUME_MAX_BYTES:
            raise FormatoError("Dimensiones de cabecera imposibles",
                               {"path": path, "dims": (H, W, D), "bytes": esperado})
        carga = f.read(esperado + 1)
    if len(carga) != esperado:
        raise DatosError(f"Carga útil de tamaño incorrecto: se esperaban {esperado} bytes y hay {len(carga)}",
                         {"path": path, "bytes_esperados": esperado, "bytes_leidos": len(carga)})
    plano = np.frombuffer(carga, dtype=DTYPE_TAGS[tag]).reshape(D, H, W)
    return VolumeFile(np.transpose(plano, (1, 2, 0)).copy(), (sx, sy, sz), tag, modalidad)


def tamano_carga(H: int, W: int, D: int, dtype_tag: int) -> int:
    """Bytes de carga útil que exige una cabecera."""
    return H * W * D * DTYPE_TAGS[dtype_tag].itemsize


def ruta_volumen(raiz: str, scan_id: str) -> str:
    return os.path.join(raiz, f"{scan_id}{VOLUME_EXTENSION}")


def ruta_mascara(raiz: str, scan_id: str) -> str:
    return os.path.join(raiz, f"{scan_id}{MASK_SUFFIX}{VOLUME_EXTENSION}")


def listar_escaneos(raiz: str) -> List[str]:
    """Identificadores de los escaneos de un directorio (excluye las máscaras)."""
    if not os.path.isdir(raiz):
        raise DatosError(f"No existe el directorio de datos {raiz}", {"raiz": raiz})
    ids = []
    for nombre in os.listdir(raiz):
        if not nombre.endswith(VOLUME_EXTENSION):
            continue
        base = nombre[:-len(VOLUME_EXTENSION)]
        if not base.endswith(MASK_SUFFIX):
            ids.append(base)
    return sorted(ids)


def cargar_escaneo(raiz: str, scan_id: str) -> ScanRecord:
    """
    Carga un escaneo y su máscara.

    Args:
        raiz (str): Directorio de datos
        scan_id (str): Identificador del escaneo

    Returns:
        ScanRecord: Escaneo con su máscara
    """
    ruta_m = ruta_mascara(raiz, scan_id)
    if not os.path.exists(ruta_m):
        raise DatosError(f"El escaneo {scan_id} no tiene máscara", {"scan_id": scan_id, "path": ruta_m})
    try:
        volumen = load_volume(ruta_volumen(raiz, scan_id))
        mascara = load_volume(ruta_m)
    except DatosError as e:
        e.detalles.setdefault("scan_id", scan_id)
        raise
    m = _PATRON_ROTADO.match(scan_id)
    angulo = float(m.group("angulo")) if m else 0.0
    return ScanRecord(scan_id, volumen.data.astype(np.float64), mascara.data.astype(np.uint8),
                      _procedencia(angulo) if m else "original", angulo, volumen.spacing)


def guardar_escaneo(registro: ScanRecord, raiz: str) -> Tuple[str, str]:
    """Escribe el volumen (float32) y la máscara (uint8) de un escaneo."""
    ruta_v = save_volume(registro.volume, ruta_volumen(raiz, registro.scan_id),
                         registro.spacing, MODALIDAD_CT, dtype_tag=1)
    ruta_m = save_volume(registro.mask.astype(np.uint8), ruta_mascara(raiz, registro.scan_id),
                         registro.spacing, MODALIDAD_MASCARA, dtype_tag=2)
    return ruta_v, ruta_m


# ---------------------------------------------------------------------------
# Intensidades y aumentación
# ---------------------------------------------------------------------------

def clamp_hu(volume) -> np.ndarray:
    return np.clip(np.asarray(volume, dtype=np.float64), HU_MIN, HU_MAX)


def normalize_hu(volume) -> np.ndarray:
    """Recorta a la ventana [−200, 300] HU y la lleva linealmente a [0, 1]."""
    return (clamp_hu(volume) - HU_MIN) / (HU_MAX - HU_MIN)


def id_aumentado(scan_id: str, angulo: int) -> str:
    return f"{scan_id}_rot{int(angulo):+d}"


def id_original(scan_id: str) -> str:
    m = _PATRON_ROTADO.match(scan_id)
    return m.group("original") if m else scan_id


def angulo_de(scan_id: str) -> int:
    """Ángulo de rotación codificado en el identificador (0 para un original)."""
    m = _PATRON_ROTADO.match(scan_id)
    return int(m.group("angulo")) if m else 0


def sin_rotaciones(scan_ids: Sequence[str]) -> List[str]:
    """
    Un identificador por escaneo original: el no rotado (ángulo 0) si está
    presente, o la primera variante en orden alfabético si no lo está.

    Args:
        scan_ids: Identificadores originales y/o rotados

    Returns:
        list: Identificadores ordenados por original
    """
    grupos: Dict[str, List[str]] = {}
    for s in sorted(scan_ids):
        grupos.setdefault(id_original(s), []).append(s)
    elegidos = []
    for original in sorted(grupos):
        sin_rotar = [s for s in grupos[original] if angulo_de(s) == 0]
        elegidos.append((sin_rotar or grupos[original])[0])
    return elegidos


def _procedencia(angulo: float) -> str:
    return "original" if angulo == 0 else f"rotado({angulo:+g})"


def rotate_scan(record: ScanRecord, degrees: float,
                limite: Optional[float] = ROTATION_LIMIT) -> ScanRecord:
    """
    Rotación axial de cada rebanada alrededor de su centro: bilineal para las
    intensidades, vecino más cercano para la máscara; el exterior se rellena
    con el mínimo de la ventana (aire).

    Args:
        record (ScanRecord): Escaneo a rotar
        degrees (float): Ángulo en grados
        limite (float, optional): Ángulo máximo admitido (None lo desactiva)

    Returns:
        ScanRecord: Escaneo rotado (θ=0 devuelve una copia exacta)
    """
    if limite is not None and abs(degrees) > limite:
        raise ConfigError(f"El ángulo debe estar en [−{limite}, {limite}]", {"grados": degrees})
    base = id_original(record.scan_id)
    nuevo_id = id_aumentado(base, degrees) if float(degrees).is_integer() else f"{base}_rot{degrees:+g}"
    if degrees == 0:
        return ScanRecord(nuevo_id, record.volume.copy(), record.mask.copy(),
                          _procedencia(0), 0.0, record.spacing)

    volumen = ndi.rotate(clamp_hu(record.volume), degrees, axes=(1, 0), reshape=False,
                         order=1, mode="constant", cval=HU_MIN)
    mascara = ndi.rotate(record.mask.astype(np.uint8), degrees, axes=(1, 0), reshape=False,
                         order=0, mode="constant", cval=0)
    # El remuestreo bilineal puede salirse de la ventana por redondeo
    return ScanRecord(nuevo_id, np.clip(volumen, HU_MIN, HU_MAX), (mascara > 0).astype(np.uint8),
                      _procedencia(degrees), float(degrees), record.spacing)


def augment_all(record: ScanRecord, angulos: Sequence[int] = ROTATION_ANGLES) -> List[ScanRecord]:
    """
    Siete copias rotadas de un escaneo (−30..+30 en pasos de 10).

    Args:
        record (ScanRecord): Escaneo original
        angulos: Ángulos de rotación

    Returns:
        list: ScanRecords rotados, en el orden de `angulos`
    """
    recortado = ScanRecord(record.scan_id, clamp_hu(record.volume), record.mask,
                           record.provenance, record.angle, record.spacing)
    return [rotate_scan(recortado, a) for a in angulos]


def extract_window(record: Union[ScanRecord, np.ndarray], center_slice_index: int, depth_D: int) -> np.ndarray:
    """
    Ventana de D rebanadas consecutivas centrada en `center_slice_index`
    (posición floor((D−1)/2) dentro de la ventana), con réplica de borde.

    Args:
        record: ScanRecord o arreglo H×W×Z
        center_slice_index (int): Rebanada central
        depth_D (int): Profundidad de la ventana

    Returns:
        numpy.ndarray: Arreglo [1, H, W, D]
    """
    volumen = record.volume if isinstance(record, ScanRecord) else np.asarray(record)
    z = volumen.shape[2]
    if not 0 <= center_slice_index < z:
        raise ConfigError("Rebanada central fuera del volumen", {"centro": center_slice_index, "profundidad": z})
    if depth_D < 1:
        raise ConfigError("La ventana requiere D >= 1", {"D": depth_D})
    inicio = center_slice_index - (depth_D - 1) // 2
    indices = np.clip(np.arange(inicio, inicio + depth_D), 0, z - 1)
    return volumen[:, :, indices][None]


# ---------------------------------------------------------------------------
# Pliegues
# ---------------------------------------------------------------------------

def make_folds(scan_ids: Sequence[str], k: int, validation_count: int, seed: int) -> FoldPlan:
    """
    Plan determinista de k pliegues; las variantes rotadas siguen a su original
    en entrenamiento y prueba, y la validación usa solo el escaneo sin rotar.

    Args:
        scan_ids: Identificadores (originales y/o rotados)
        k (int): Número de pliegues
        validation_count (int): Escaneos de validación tomados del entrenamiento
        seed (int): Semilla

    Returns:
        FoldPlan: Plan verificado
    """
    grupos: Dict[str, List[str]] = {}
    for s in sorted(scan_ids):
        grupos.setdefault(id_original(s), []).append(s)
    originales = sorted(grupos)
    if k < 2 or k > len(originales):
        raise ConfigError(f"k debe estar entre 2 y el número de escaneos ({len(originales)})", {"k": k})
    if validation_count < 0:
        raise ConfigError("validation_count debe ser no negativo", {"validation_count": validation_count})

    rng = np.random.default_rng(seed)
    orden = [originales[i] for i in rng.permutation(len(originales))]
    bloques = [list(b) for b in np.array_split(np.array(orden, dtype=object), k)]

    def expandir(ids):
        return [v for o in sorted(ids) for v in grupos[o]]

    plan = FoldPlan(k=k, seed=seed)
    for i, prueba in enumerate(bloques):
        resto = sorted(o for j, b in enumerate(bloques) if j != i for o in b)
        if validation_count >= len(resto):
            raise ConfigError("No quedan escaneos de entrenamiento tras reservar la validación",
                              {"pliegue": i, "disponibles": len(resto), "validation_count": validation_count})
        elegidos = set(rng.choice(len(resto), size=validation_count, replace=False).tolist()) if validation_count else set()
        validacion = [o for n, o in enumerate(resto) if n in elegidos]
        entrenamiento = [o for n, o in enumerate(resto) if n not in elegidos]
        plan.folds.append(Pliegue(expandir(entrenamiento), sin_rotaciones(expandir(validacion)), expandir(prueba)))
    plan.verificar()
    logger.debug(f"Plan de {k} pliegues sobre {len(originales)} escaneos", extra={"detalles": plan.a_dict()})
    return plan
