#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Punto de entrada de línea de comandos del segmentador volumétrico.

Subcomandos: augment, train, segment, refine, eval, gradcheck, print-config.
La configuración se lee de un documento JSON (--config) y las banderas
prevalecen sobre el archivo. Códigos de salida: 0 éxito, 1 fallo de
dominio, 2 fallo de uso o de E/S.
"""

import argparse
import json
import os
import sys
from typing import List, Optional, Sequence, Tuple
import numpy as np
from colorama import Fore, Style, init
from config import ROTATION_ANGLES
from helpers.cache_manager import AumentoCache, MapaPesosCache
from helpers.crf_refine import refine, reescalar_gris
from helpers.dataio import (
    ScanRecord, cargar_escaneo, clamp_hu, id_original, listar_escaneos, load_volume, make_folds,
    ruta_mascara, ruta_volumen, save_volume, MODALIDAD_MASCARA, MODALIDAD_PROBABILIDAD
)
from helpers.error_handler import (
    ConfigError, DatosError, ErrorHandler, SegmentadorError, SALIDA_OK, SALIDA_DOMINIO, SALIDA_USO
)
from helpers.evalkit import emitir_overlays, formatear_tabla, lineas_reporte, probability_volume, segment_volume
from helpers.gradcheck import OPERACIONES, ejecutar_suite, peor_resultado
from helpers.logger import Logger, log_metrica, set_log_level
from helpers.net3d2d import load_checkpoint
from helpers.run_config import RunConfig, cargar_run_config
from helpers.trainer import train

init()
logger = Logger.get_logger()

ARCHIVO_CONFIG_CORRIDA = "config.json"


def _info(mensaje: str) -> None:
    print(f"{Fore.CYAN}{mensaje}{Style.RESET_ALL}", file=sys.stderr)


def _ok(mensaje: str) -> None:
    print(f"{Fore.GREEN}✅ {mensaje}{Style.RESET_ALL}", file=sys.stderr)


def _advertencia(mensaje: str) -> None:
    print(f"{Fore.YELLOW}⚠️ {mensaje}{Style.RESET_ALL}", file=sys.stderr)


def _directorio_aumentos(cfg: RunConfig) -> str:
    return os.path.join(cfg.datos.cache, "aumentados")


def _originales(raiz: str) -> List[str]:
    return [s for s in listar_escaneos(raiz) if id_original(s) == s]


# ---------------------------------------------------------------------------
# Subcomandos
# ---------------------------------------------------------------------------

def cmd_augment(cfg: RunConfig, args) -> int:
    """Materializa las siete rotaciones de cada escaneo en la caché."""
    cache = AumentoCache(_directorio_aumentos(cfg))
    nuevos, errores = 0, []
    for scan_id in _originales(cfg.datos.raiz):
        try:
            registro = cargar_escaneo(cfg.datos.raiz, scan_id)
            nuevos += cache.materializar(registro, ROTATION_ANGLES)
        except DatosError as e:
            errores.append((scan_id, e.mensaje))
            logger.error(f"No se pudo aumentar {scan_id}: {e.mensaje}", extra={"detalles": e.detalles})

    print(f"nuevos\t{nuevos}")
    print(f"en_cache\t{len(cache.cache)}")
    log_metrica("volumenes_aumentados", nuevos, {"cache": cache.directorio})
    if errores:
        _advertencia(f"{len(errores)} escaneo(s) con errores:")
        for scan_id, mensaje in errores:
            print(f"error\t{scan_id}\t{mensaje}")
        return SALIDA_DOMINIO
    _ok(f"Aumentación completa en {cache.directorio}")
    return SALIDA_OK


def _datos_entrenamiento(cfg: RunConfig) -> Tuple[str, List[str], Optional[List[int]]]:
    """(raíz de datos, identificadores, rotaciones en memoria o None)."""
    if cfg.datos.al_vuelo:
        return cfg.datos.raiz, _originales(cfg.datos.raiz), list(ROTATION_ANGLES)
    directorio = _directorio_aumentos(cfg)
    ids = listar_escaneos(directorio) if os.path.isdir(directorio) else []
    if not ids:
        raise ConfigError("No hay escaneos aumentados en la caché: ejecute augment o use --al-vuelo",
                          {"cache": directorio})
    return directorio, ids, None


def _pliegues(cfg: RunConfig, ids: Sequence[str]):
    plan = make_folds(ids, cfg.pliegue.k, cfg.pliegue.validacion, cfg.semilla)
    if cfg.pliegue.indice is None:
        return list(enumerate(plan.folds))
    if not 0 <= cfg.pliegue.indice < plan.k:
        raise ConfigError(f"Pliegue fuera de rango: {cfg.pliegue.indice}", {"pliegue": cfg.pliegue.indice, "k": plan.k})
    return [(cfg.pliegue.indice, plan.folds[cfg.pliegue.indice])]


def cmd_train(cfg: RunConfig, args) -> int:
    """Entrena la red sobre los pliegues seleccionados."""
    raiz, ids, rotaciones = _datos_entrenamiento(cfg)
    train_config = cfg.train_config()
    cache_pesos = MapaPesosCache(cfg.perdida, os.path.join(cfg.datos.cache, "pesos"))

    for indice, pliegue in _pliegues(cfg, ids):
        salida = os.path.join(cfg.salida, f"pliegue_{indice}")
        os.makedirs(salida, exist_ok=True)
        with open(os.path.join(salida, ARCHIVO_CONFIG_CORRIDA), "w", encoding="utf-8") as f:
            f.write(cfg.a_json())
        _info(f"Pliegue {indice}: {len(pliegue.train)} entrenamiento, {len(pliegue.validation)} validación, "
              f"{len(pliegue.test)} prueba")

        def resumen(registro, indice=indice):
            print(f"pliegue {indice}\tepoca {registro.epoch}\tperdida_media {registro.train_loss_mean:.6f}\t"
                  f"val_loss {registro.val_loss:.6f}\tval_dice {registro.val_dice:.4f}\t{registro.checkpoint}",
                  flush=True)

        try:
            _, log = train(cfg.red, train_config, pliegue, raiz, salida, rotaciones=rotaciones,
                           reanudar=args.resume, hilos=cfg.datos.hilos, cache_pesos=cache_pesos,
                           al_terminar_epoca=resumen)
        except SegmentadorError as e:
            e.detalles.setdefault("pliegue", indice)
            raise
        mejor = log.mejor
        print(f"pliegue {indice}\tmejor_epoca {mejor.epoch}\t{os.path.join(salida, mejor.checkpoint)}")
    return SALIDA_OK


def _escaneo_para_segmentar(raiz: str, scan_id: str) -> Tuple[ScanRecord, bool]:
    """Carga el escaneo; sin máscara se segmenta sin calcular Dice."""
    if os.path.exists(ruta_mascara(raiz, scan_id)):
        return cargar_escaneo(raiz, scan_id), True
    volumen = load_volume(ruta_volumen(raiz, scan_id))
    datos = volumen.data.astype(np.float64)
    return ScanRecord(scan_id, datos, np.zeros(datos.shape, dtype=np.uint8), spacing=volumen.spacing), False


def _segmentar(cfg: RunConfig, args, params, scan_id: str):
    scan, con_verdad = _escaneo_para_segmentar(cfg.datos.raiz, scan_id)
    probs = probability_volume(params, scan, cfg.datos.hilos)
    mascara, reporte = segment_volume(params, scan, cfg.crf if args.crf else None, cfg.datos.hilos,
                                      probs=probs, con_verdad=con_verdad)
    if args.overlay:
        emitir_overlays(scan, mascara, args.overlay, con_verdad)
    return scan, probs[0], mascara, reporte


def cmd_segment(cfg: RunConfig, args) -> int:
    """Segmenta un escaneo y escribe la máscara predicha."""
    params = load_checkpoint(args.checkpoint, cfg.red)
    scan, probs, mascara, reporte = _segmentar(cfg, args, params, args.scan)

    sufijo = "_crf" if args.crf else ""
    ruta = save_volume(mascara, os.path.join(cfg.salida, f"{scan.scan_id}_prediccion{sufijo}.vol"),
                       scan.spacing, MODALIDAD_MASCARA, dtype_tag=2)
    if args.probabilidades:
        save_volume(probs[1].astype(np.float32), os.path.join(cfg.salida, f"{scan.scan_id}_probabilidad.vol"),
                    scan.spacing, MODALIDAD_PROBABILIDAD, dtype_tag=1)

    print(formatear_tabla([reporte]))
    for linea in lineas_reporte([reporte]):
        print(linea)
    _ok(f"Máscara escrita en {ruta}")
    return SALIDA_OK


def cmd_refine(cfg: RunConfig, args) -> int:
    """Refina con CRF un mapa de probabilidades ya calculado."""
    probabilidad = load_volume(args.probabilidades)
    imagen = load_volume(args.imagen)
    if probabilidad.dims != imagen.dims:
        raise DatosError("El mapa de probabilidades y la imagen tienen formas distintas",
                         {"probabilidades": probabilidad.dims, "imagen": imagen.dims})
    p1 = probabilidad.data.astype(np.float64)
    intensidades = clamp_hu(imagen.data.astype(np.float64))
    rebanadas = [
        refine(np.stack([1.0 - p1[..., z], p1[..., z]]), reescalar_gris(intensidades[..., z]), cfg.crf)
        for z in range(p1.shape[2])
    ]
    ruta = save_volume(np.stack(rebanadas, axis=-1), args.salida_mascara, imagen.spacing,
                       MODALIDAD_MASCARA, dtype_tag=2)
    _ok(f"Máscara refinada escrita en {ruta}")
    return SALIDA_OK


def cmd_eval(cfg: RunConfig, args) -> int:
    """Segmenta varios escaneos e imprime la tabla de reportes."""
    if args.scan:
        ids = args.scan
    elif cfg.pliegue.indice is not None:
        ids = _pliegues(cfg, _originales(cfg.datos.raiz))[0][1].test
    else:
        ids = _originales(cfg.datos.raiz)
    if not ids:
        raise DatosError("No hay escaneos que evaluar", {"raiz": cfg.datos.raiz})

    params = load_checkpoint(args.checkpoint, cfg.red)
    reportes = [_segmentar(cfg, args, params, scan_id)[3] for scan_id in ids]
    print(formatear_tabla(reportes))
    for linea in lineas_reporte(reportes):
        print(linea)
    return SALIDA_OK


def cmd_gradcheck(cfg: RunConfig, args) -> int:
    """Verifica los gradientes analíticos contra diferencias finitas."""
    resultados = ejecutar_suite(semilla=cfg.semilla, operaciones=args.operacion or None)
    for r in resultados:
        estado = "ok" if r.aprobado else "FALLA"
        print(f"{r.operacion}\t{r.error_maximo:.3e}\t{estado}")
    peor = peor_resultado(resultados)
    if not peor.aprobado:
        _advertencia(f"Gradiente incorrecto en {peor.operacion}: error relativo {peor.error_maximo:.3e} "
                     f"> {peor.tolerancia:g}")
        return SALIDA_DOMINIO
    _ok(f"{len(resultados)} operaciones verificadas (peor: {peor.operacion}, {peor.error_maximo:.3e})")
    return SALIDA_OK


def cmd_print_config(cfg: RunConfig, args) -> int:
    print(cfg.a_json())
    return SALIDA_OK


COMANDOS = {
    "augment": cmd_augment,
    "train": cmd_train,
    "segment": cmd_segment,
    "refine": cmd_refine,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "print-config": cmd_print_config,
}


# ---------------------------------------------------------------------------
# Argumentos
# ---------------------------------------------------------------------------

def construir_parser() -> argparse.ArgumentParser:
    comun = argparse.ArgumentParser(add_help=False)
    comun.add_argument("--config", help="Documento JSON de configuración")
    comun.add_argument("--set", action="append", default=[], metavar="SECCION.CLAVE=VALOR",
                       help="Asignación que prevalece sobre el archivo (repetible)")
    comun.add_argument("--seed", type=int, help="Semilla de la corrida")
    comun.add_argument("--fold", type=int, help="Índice del pliegue")
    comun.add_argument("--threads", type=int, help="Límite de hilos de trabajo")
    comun.add_argument("--al-vuelo", action="store_true", help="Aumentar en memoria en lugar de usar la caché")
    comun.add_argument("--debug", action="store_true", help="Mostrar mensajes de depuración en consola")

    parser = argparse.ArgumentParser(prog="voxelseg", description="Segmentación volumétrica de hígado en TC")
    sub = parser.add_subparsers(dest="comando", required=True)

    sub.add_parser("augment", parents=[comun], help="Materializar las rotaciones en la caché")

    p = sub.add_parser("train", parents=[comun], help="Entrenar por pliegues")
    p.add_argument("--resume", action="store_true", help="Reanudar desde el último checkpoint")

    p = sub.add_parser("segment", parents=[comun], help="Segmentar un escaneo")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scan", required=True, help="Identificador del escaneo en la raíz de datos")
    p.add_argument("--crf", action="store_true", help="Refinar con CRF")
    p.add_argument("--overlay", metavar="DIR", help="Escribir superposiciones PPM por rebanada")
    p.add_argument("--probabilidades", action="store_true", help="Escribir también el mapa de probabilidades")

    p = sub.add_parser("refine", parents=[comun], help="Refinar un mapa de probabilidades con CRF")
    p.add_argument("--probabilidades", required=True, help="Volumen de probabilidades de la clase órgano")
    p.add_argument("--imagen", required=True, help="Volumen de intensidades en HU")
    p.add_argument("--salida-mascara", required=True, help="Volumen de máscara a escribir")

    p = sub.add_parser("eval", parents=[comun], help="Evaluar varios escaneos")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scan", action="append", help="Escaneo a evaluar (repetible)")
    p.add_argument("--crf", action="store_true")
    p.add_argument("--overlay", metavar="DIR")

    p = sub.add_parser("gradcheck", parents=[comun], help="Verificar gradientes por diferencias finitas")
    p.add_argument("--operacion", action="append", choices=list(OPERACIONES))

    sub.add_parser("print-config", parents=[comun], help="Imprimir la configuración efectiva")
    return parser


def asignaciones(args) -> List[str]:
    """Asignaciones de --set seguidas de las banderas dedicadas (las banderas ganan)."""
    resultado = list(args.set)
    if args.seed is not None:
        resultado.append(f"semilla={args.seed}")
    if args.fold is not None:
        resultado.append(f"pliegue.indice={args.fold}")
    if args.threads is not None:
        resultado.append(f"datos.hilos={args.threads}")
    if args.al_vuelo:
        resultado.append("datos.al_vuelo=true")
    return resultado


def _reportar(error: Exception, en_configuracion: bool) -> int:
    error_info = ErrorHandler.handle_error(error, "CONFIG" if en_configuracion else "general")
    for diferencia in error_info.get("detalles", {}).get("diferencias", []):
        print(f"  {diferencia['ruta']}: {diferencia['problema']}", file=sys.stderr)
    if "clave" in error_info.get("detalles", {}):
        print(f"clave\t{error_info['detalles']['clave']}", file=sys.stderr)
    return ErrorHandler.codigo_salida(error_info, en_configuracion)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = construir_parser().parse_args(argv)
    if args.debug:
        set_log_level("DEBUG")

    try:
        cfg = cargar_run_config(args.config, asignaciones(args))
    except (SegmentadorError, json.JSONDecodeError, OSError) as e:
        return _reportar(e, en_configuracion=True)

    logger.info(f"Comando {args.comando}", extra={"detalles": {"config": cfg.a_dict()}})
    try:
        return COMANDOS[args.comando](cfg, args)
    except KeyboardInterrupt:
        _advertencia("Interrumpido por el usuario")
        return SALIDA_USO
    except Exception as e:
        return _reportar(e, en_configuracion=False)


if __name__ == "__main__":
    sys.exit(main())
