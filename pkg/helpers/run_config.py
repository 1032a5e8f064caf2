#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Documento de configuración de una corrida (RunConfig).
Reúne en un único JSON la arquitectura, el entrenamiento, la pérdida, el
CRF, los datos, el pliegue, la semilla y el directorio de salida. Las
claves desconocidas se rechazan nombrando la clave.
"""

import json
import os
from dataclasses import dataclass, field, fields, asdict, replace
from typing import Any, Dict, Optional, Sequence, Union, get_args, get_origin, get_type_hints
from config import DATA_DIR, OUTPUT_DIR, CACHE_DIR, FOLDS_K, FOLDS_VALIDATION, SEED, THREADS
from helpers.crf_refine import CrfParams
from helpers.error_handler import ConfigError, DatosError
from helpers.net3d2d import NetworkConfig
from helpers.trainer import TrainConfig
from helpers.weightmap_loss import LossParams

# Campos de TrainConfig que viven en otras secciones del documento
_EXCLUIDOS_ENTRENAMIENTO = ("loss", "seed")


@dataclass(frozen=True)
class DatosConfig:
    raiz: str = DATA_DIR
    cache: str = CACHE_DIR
    # Aumentar en memoria cuando no hay caché de rotaciones
    al_vuelo: bool = False
    hilos: int = THREADS

    def __post_init__(self):
        if self.hilos < 1:
            raise ConfigError("hilos debe ser >= 1", {"hilos": self.hilos})


@dataclass(frozen=True)
class PliegueConfig:
    k: int = FOLDS_K
    validacion: int = FOLDS_VALIDATION
    # None recorre todos los pliegues
    indice: Optional[int] = None


@dataclass(frozen=True)
class RunConfig:
    red: NetworkConfig = field(default_factory=NetworkConfig)
    entrenamiento: TrainConfig = field(default_factory=TrainConfig)
    perdida: LossParams = field(default_factory=LossParams)
    crf: CrfParams = field(default_factory=CrfParams)
    datos: DatosConfig = field(default_factory=DatosConfig)
    pliegue: PliegueConfig = field(default_factory=PliegueConfig)
    semilla: int = SEED
    salida: str = OUTPUT_DIR

    def train_config(self) -> TrainConfig:
        """TrainConfig efectivo: incorpora la pérdida y la semilla del documento."""
        return replace(self.entrenamiento, loss=self.perdida, seed=self.semilla)

    def a_dict(self) -> Dict[str, Any]:
        entrenamiento = {k: v for k, v in asdict(self.entrenamiento).items() if k not in _EXCLUIDOS_ENTRENAMIENTO}
        return {
            "red": self.red.a_dict(),
            "entrenamiento": entrenamiento,
            "perdida": asdict(self.perdida),
            "crf": asdict(self.crf),
            "datos": asdict(self.datos),
            "pliegue": asdict(self.pliegue),
            "semilla": self.semilla,
            "salida": self.salida,
        }

    def a_json(self) -> str:
        return json.dumps(self.a_dict(), indent=2, ensure_ascii=False)


_SECCIONES = {
    "red": NetworkConfig,
    "entrenamiento": TrainConfig,
    "perdida": LossParams,
    "crf": CrfParams,
    "datos": DatosConfig,
    "pliegue": PliegueConfig,
}
_ESCALARES = {"semilla": int, "salida": str}


def _tipo_valido(valor: Any, tipo: Any) -> bool:
    origen = get_origin(tipo)
    if origen is Union:
        return any(_tipo_valido(valor, t) for t in get_args(tipo))
    if tipo is type(None):
        return valor is None
    if origen in (tuple, list):
        elemento = get_args(tipo)[0] if get_args(tipo) else Any
        return isinstance(valor, (list, tuple)) and all(_tipo_valido(v, elemento) for v in valor)
    # bool es subclase de int: true no vale como entero
    if tipo is bool:
        return isinstance(valor, bool)
    if tipo is int:
        return isinstance(valor, int) and not isinstance(valor, bool)
    if tipo is float:
        return isinstance(valor, (int, float)) and not isinstance(valor, bool)
    if tipo is str:
        return isinstance(valor, str)
    return True


def _nombre_tipo(tipo: Any) -> str:
    return getattr(tipo, "__name__", None) or str(tipo).replace("typing.", "")


def _verificar_tipo(clave: str, valor: Any, tipo: Any) -> None:
    if not _tipo_valido(valor, tipo):
        raise ConfigError(f"Tipo inválido para {clave}: se esperaba {_nombre_tipo(tipo)}, se recibió {valor!r}",
                          {"clave": clave, "esperado": _nombre_tipo(tipo), "recibido": type(valor).__name__})


def _seccion(nombre: str, clase, valores: Any):
    if not isinstance(valores, dict):
        raise ConfigError(f"La sección {nombre} debe ser un objeto", {"clave": nombre})
    permitidos = {f.name for f in fields(clase)}
    if clase is TrainConfig:
        permitidos -= set(_EXCLUIDOS_ENTRENAMIENTO)
    tipos = get_type_hints(clase)
    for clave, valor in valores.items():
        if clave not in permitidos:
            raise ConfigError(f"Clave desconocida: {nombre}.{clave}", {"clave": f"{nombre}.{clave}"})
        _verificar_tipo(f"{nombre}.{clave}", valor, tipos[clave])
    try:
        return clase(**valores)
    except TypeError as e:
        raise ConfigError(f"Valor inválido en la sección {nombre}: {e}", {"clave": nombre}) from e


def desde_dict(datos: Dict[str, Any]) -> RunConfig:
    """
    Construye un RunConfig a partir de un documento (parcial) de configuración.

    Args:
        datos (dict): Documento; las secciones ausentes toman valores por defecto

    Returns:
        RunConfig: Configuración validada
    """
    if not isinstance(datos, dict):
        raise ConfigError("El documento de configuración debe ser un objeto JSON")
    kwargs = {}
    for clave, valor in datos.items():
        if clave in _SECCIONES:
            kwargs[clave] = _seccion(clave, _SECCIONES[clave], valor)
        elif clave in _ESCALARES:
            _verificar_tipo(clave, valor, _ESCALARES[clave])
            kwargs[clave] = valor
        else:
            raise ConfigError(f"Clave desconocida: {clave}", {"clave": clave})
    return RunConfig(**kwargs)


def _interpretar(valor: str) -> Any:
    try:
        return json.loads(valor)
    except json.JSONDecodeError:
        return valor


def aplicar_overrides(documento: Dict[str, Any], asignaciones: Sequence[str]) -> Dict[str, Any]:
    """
    Aplica asignaciones `seccion.clave=valor` (o `clave=valor` para escalares).

    Args:
        documento (dict): Documento a modificar (se copia)
        asignaciones: Lista de asignaciones

    Returns:
        dict: Documento con las asignaciones aplicadas
    """
    resultado = json.loads(json.dumps(documento))
    for asignacion in asignaciones:
        if "=" not in asignacion:
            raise ConfigError(f"Asignación sin '=': {asignacion}", {"clave": asignacion})
        ruta, valor = asignacion.split("=", 1)
        partes = ruta.strip().split(".")
        destino = resultado
        for parte in partes[:-1]:
            destino = destino.setdefault(parte, {})
            if not isinstance(destino, dict):
                raise ConfigError(f"{parte} no es una sección", {"clave": ruta})
        destino[partes[-1]] = _interpretar(valor.strip())
    return resultado


def cargar_run_config(path: Optional[str] = None, asignaciones: Sequence[str] = ()) -> RunConfig:
    """
    Lee el documento JSON (si se indica) y aplica las asignaciones de la CLI.

    Args:
        path (str, optional): Ruta del documento
        asignaciones: Asignaciones que prevalecen sobre el archivo

    Returns:
        RunConfig: Configuración resultante
    """
    documento: Dict[str, Any] = {}
    if path:
        if not os.path.exists(path):
            raise DatosError(f"No existe el archivo de configuración {path}", {"path": path})
        try:
            with open(path, "r", encoding="utf-8") as f:
                documento = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"JSON inválido en {path}: {e}", {"path": path}) from e
    return desde_dict(aplicar_overrides(documento, asignaciones))
