#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Módulo para el manejo centralizado de errores del segmentador.
Define tipos de errores específicos y proporciona funciones para manejarlos
de manera consistente, incluyendo el código de salida de la CLI.
"""

import sys
import traceback
import json
from typing import Dict, Any, Optional
from colorama import Fore, Style

# Códigos de salida de la CLI
SALIDA_OK = 0
SALIDA_DOMINIO = 1
SALIDA_USO = 2


class SegmentadorError(Exception):
    """Clase base para todos los errores del segmentador."""

    def __init__(self, mensaje: str, detalles: Optional[Dict[str, Any]] = None):
        """
        Inicializa un error del segmentador.

        Args:
            mensaje (str): Mensaje descriptivo del error
            detalles (dict, optional): Detalles adicionales del error
        """
        self.mensaje = mensaje
        self.detalles = detalles or {}
        super().__init__(self.mensaje)

    def to_dict(self) -> Dict[str, Any]:
        """
        Convierte el error a un diccionario.

        Returns:
            dict: Representación del error como diccionario
        """
        return {
            "tipo": self.__class__.__name__,
            "mensaje": self.mensaje,
            "detalles": self.detalles
        }

    def __str__(self) -> str:
        if self.detalles:
            return f"{self.mensaje} - Detalles: {json.dumps(self.detalles, ensure_ascii=False, default=str)}"
        return self.mensaje


class ConfigError(SegmentadorError):
    """Error de configuración: formas incompatibles, invariantes violados, claves desconocidas."""
    pass


class DatosError(SegmentadorError):
    """Error al cargar o guardar datos (volúmenes, máscaras, checkpoints)."""
    pass


class FormatoError(DatosError):
    """Archivo con magia o versión de formato incorrecta."""
    pass


class CheckpointError(DatosError):
    """Checkpoint incompatible con la configuración de red."""
    pass


class InternoError(SegmentadorError):
    """Inconsistencia interna (contexto guardado, gradiente faltante, arquitectura)."""
    pass


class EntrenamientoError(SegmentadorError):
    """Fallo durante el entrenamiento (divergencia de la pérdida)."""
    pass


class ErrorHandler:
    """
    Manejador centralizado de errores para el segmentador.
    Proporciona métodos para manejar diferentes tipos de errores de manera consistente.
    """

    # Errores que corresponden a problemas de uso o de E/S
    _ERRORES_USO = ("DatosError", "FormatoError", "CheckpointError")

    @staticmethod
    def handle_error(error: Exception, tipo_error: str = "general",
                     mostrar_traceback: bool = False,
                     log_error: bool = True) -> Dict[str, Any]:
        """
        Maneja un error y devuelve un diccionario con la información del error.

        Args:
            error (Exception): El error a manejar
            tipo_error (str): Tipo de error (para categorización)
            mostrar_traceback (bool): Si se debe incluir el traceback completo
            log_error (bool): Si se debe registrar el error en el log

        Returns:
            dict: Diccionario con información del error
        """
        if not isinstance(error, SegmentadorError):
            categoria = tipo_error.upper()
            if isinstance(error, (OSError, EOFError)) or "DATOS" in categoria:
                error = DatosError(str(error), {"original_error": type(error).__name__})
            elif "CONFIG" in categoria:
                error = ConfigError(str(error), {"original_error": type(error).__name__})
            else:
                error = SegmentadorError(str(error), {"original_error": type(error).__name__})

        error_info = error.to_dict()

        if mostrar_traceback:
            error_info["traceback"] = traceback.format_exc()

        print(f"{Fore.RED}❌ Error ({error_info['tipo']}): {error_info['mensaje']}{Style.RESET_ALL}", file=sys.stderr)

        if log_error:
            from helpers.logger import log_error as registrar
            registrar(f"Error ({error_info['tipo']}): {error_info['mensaje']}", error,
                      {"categoria": tipo_error})

        return error_info

    @staticmethod
    def codigo_salida(error_info: Dict[str, Any], en_configuracion: bool = False) -> int:
        """
        Obtiene el código de salida de la CLI para un error manejado.

        Args:
            error_info (dict): Información del error (de handle_error)
            en_configuracion (bool): Si el error ocurrió al parsear la configuración

        Returns:
            int: 1 para fallos de dominio, 2 para fallos de uso o E/S
        """
        tipo = error_info.get("tipo", "SegmentadorError")
        if tipo in ErrorHandler._ERRORES_USO:
            return SALIDA_USO
        if tipo == "ConfigError" and en_configuracion:
            return SALIDA_USO
        return SALIDA_DOMINIO
