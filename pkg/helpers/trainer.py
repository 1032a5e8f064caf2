#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Entrenamiento de la red con la entropía cruzada ponderada por bordes.
Recorre las rebanadas centrales de los escaneos de entrenamiento (con sus
rotaciones), actualiza los parámetros con Adam o SGD con momento, valida al
final de cada época y se detiene temprano cuando la pérdida de validación
deja de mejorar. Cada época deja un checkpoint, el estado del optimizador y
una línea en el TrainLog, lo que permite reanudar una corrida interrumpida;
en disco solo quedan los checkpoints de la mejor época y de la última.
"""

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace, asdict
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple
import numpy as np
import pandas as pd
from config import (
    TRAIN_OPTIMIZER, TRAIN_LEARNING_RATE, TRAIN_MOMENTUM, TRAIN_BETA1, TRAIN_BETA2, TRAIN_ADAM_EPS,
    TRAIN_MAX_EPOCHS, TRAIN_PATIENCE, TRAIN_BATCH_SIZE, SEED, THREADS
)
from helpers.dataio import (
    Pliegue, ScanRecord, augment_all, cargar_escaneo, extract_window, normalize_hu, sin_rotaciones
)
from helpers.error_handler import ConfigError, EntrenamientoError, InternoError
from helpers.evalkit import probability_volume, segment_volume
from helpers.logger import Logger, log_epoca, log_metrica
from helpers.net3d2d import NetworkConfig, NetworkParams, build, forward, backward, save_checkpoint, load_checkpoint
from helpers.tensor_core import Tensor, resolver_dtype
from helpers.weightmap_loss import LossParams, weight_map, weighted_cross_entropy
from helpers.cache_manager import MapaPesosCache

logger = Logger.get_logger()

COLUMNAS_LOG = ["epoch", "train_loss_sum", "train_loss_mean", "val_loss", "val_dice", "seconds", "checkpoint"]
ARCHIVO_LOG = "trainlog.tsv"
ARCHIVO_OPTIMIZADOR = "optimizador.npz"


@dataclass(frozen=True)
class TrainConfig:
    """Hiperparámetros del entrenamiento."""

    optimizer: str = TRAIN_OPTIMIZER
    learning_rate: float = TRAIN_LEARNING_RATE
    momentum: float = TRAIN_MOMENTUM
    beta1: float = TRAIN_BETA1
    beta2: float = TRAIN_BETA2
    adam_eps: float = TRAIN_ADAM_EPS
    max_epochs: int = TRAIN_MAX_EPOCHS
    patience: int = TRAIN_PATIENCE
    batch_size: int = TRAIN_BATCH_SIZE
    seed: int = SEED
    # None conserva el dropout de la configuración de red
    dropout_p: Optional[float] = None
    loss: LossParams = field(default_factory=LossParams)

    def __post_init__(self):
        if isinstance(self.loss, dict):
            object.__setattr__(self, "loss", LossParams(**self.loss))
        fallidas = []
        if self.optimizer not in ("adam", "sgd_momentum"):
            fallidas.append(f"optimizer en {{adam, sgd_momentum}} (recibido {self.optimizer})")
        if self.learning_rate <= 0:
            fallidas.append("learning_rate > 0")
        if self.patience < 1:
            fallidas.append("patience >= 1")
        if self.batch_size < 1:
            fallidas.append("batch_size >= 1")
        if self.max_epochs < 1:
            fallidas.append("max_epochs >= 1")
        if not 0.0 <= self.momentum < 1.0 or not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            fallidas.append("momentum, beta1 y beta2 en [0, 1)")
        if fallidas:
            raise ConfigError("Configuración de entrenamiento inválida", {"restricciones": fallidas})


# ---------------------------------------------------------------------------
# TrainLog
# ---------------------------------------------------------------------------

@dataclass
class RegistroEpoca:
    epoch: int
    train_loss_sum: float
    train_loss_mean: float
    val_loss: float
    val_dice: float
    seconds: float
    checkpoint: str


@dataclass
class TrainLog:
    """Registros por época y puntero a la mejor época de validación."""

    registros: List[RegistroEpoca] = field(default_factory=list)
    mejor_epoca: Optional[int] = None

    def agregar(self, registro: RegistroEpoca) -> None:
        if self.registros and registro.epoch <= self.registros[-1].epoch:
            raise InternoError("Las épocas del TrainLog deben ser estrictamente crecientes",
                               {"ultima": self.registros[-1].epoch, "nueva": registro.epoch})
        self.registros.append(registro)

    @property
    def mejor(self) -> Optional[RegistroEpoca]:
        for r in self.registros:
            if r.epoch == self.mejor_epoca:
                return r
        return None

    def a_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.registros], columns=COLUMNAS_LOG)

    def guardar(self, path: str) -> str:
        """Una época por línea, separada por tabuladores."""
        self.a_dataframe().to_csv(path, sep="\t", index=False, float_format="%.17g")
        return path

    @classmethod
    def cargar(cls, path: str) -> "TrainLog":
        tabla = pd.read_csv(path, sep="\t", dtype={"checkpoint": str})
        log = cls()
        for fila in tabla.itertuples(index=False):
            log.agregar(RegistroEpoca(int(fila.epoch), float(fila.train_loss_sum), float(fila.train_loss_mean),
                                      float(fila.val_loss), float(fila.val_dice), float(fila.seconds),
                                      str(fila.checkpoint)))
        log.mejor_epoca = _mejor_epoca(log.registros)
        return log


def _mejor_epoca(registros: Sequence[RegistroEpoca]) -> Optional[int]:
    mejor, valor = None, math.inf
    for r in registros:
        if r.val_loss < valor:
            mejor, valor = r.epoch, r.val_loss
    return mejor


# ---------------------------------------------------------------------------
# Optimizador
# ---------------------------------------------------------------------------

@dataclass
class EstadoOptimizador:
    paso: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def guardar(self, path: str) -> str:
        arreglos = {"paso": np.array(self.paso)}
        arreglos.update({f"m/{k}": a for k, a in self.m.items()})
        arreglos.update({f"v/{k}": a for k, a in self.v.items()})
        with open(path, "wb") as f:
            np.savez(f, **arreglos)
        return path

    @classmethod
    def cargar(cls, path: str) -> "EstadoOptimizador":
        with np.load(path) as datos:
            estado = cls(paso=int(datos["paso"]))
            for clave in datos.files:
                if clave.startswith("m/"):
                    estado.m[clave[2:]] = datos[clave].copy()
                elif clave.startswith("v/"):
                    estado.v[clave[2:]] = datos[clave].copy()
        return estado


def optimizer_step(params: Mapping[str, Tensor], grads: Optional[Mapping[str, np.ndarray]],
                   opt_state: EstadoOptimizador, config: TrainConfig) -> EstadoOptimizador:
    """
    Aplica un paso de Adam o SGD con momento, en el lugar, y pone a cero los gradientes.

    Args:
        params: Parámetros por ruta de capa
        grads: Gradientes por ruta (None usa la ranura grad de cada Tensor)
        opt_state (EstadoOptimizador): Momentos acumulados
        config (TrainConfig): Optimizador y sus hiperparámetros

    Returns:
        EstadoOptimizador: Estado actualizado
    """
    gradientes = {}
    for ruta, tensor in params.items():
        g = grads.get(ruta) if grads is not None else tensor.grad
        if g is None:
            raise InternoError(f"Falta el gradiente de {ruta}", {"ruta": ruta})
        gradientes[ruta] = np.asarray(g)

    opt_state.paso += 1
    t = opt_state.paso
    lr = config.learning_rate
    for ruta, tensor in params.items():
        g = gradientes[ruta]
        if config.optimizer == "sgd_momentum":
            v = opt_state.v.get(ruta)
            v = g.copy() if v is None else config.momentum * v + g
            opt_state.v[ruta] = v
            tensor.data -= lr * v
        else:
            m = opt_state.m.get(ruta, np.zeros_like(g))
            v = opt_state.v.get(ruta, np.zeros_like(g))
            m = config.beta1 * m + (1.0 - config.beta1) * g
            v = config.beta2 * v + (1.0 - config.beta2) * g * g
            opt_state.m[ruta], opt_state.v[ruta] = m, v
            m_hat = m / (1.0 - config.beta1 ** t)
            v_hat = v / (1.0 - config.beta2 ** t)
            tensor.data -= lr * m_hat / (np.sqrt(v_hat) + config.adam_eps)
        tensor.zero_grad()
    return opt_state


# ---------------------------------------------------------------------------
# Validación
# ---------------------------------------------------------------------------

def validate(params: NetworkParams, scan_ids: Sequence[str], data_root: str,
             loss_params: LossParams = LossParams(), hilos: int = THREADS,
             escaneos: Optional[Sequence[ScanRecord]] = None) -> Tuple[float, float]:
    """
    Pérdida media por píxel y Dice medio sobre los escaneos de validación,
    en modo de inferencia.

    Args:
        params (NetworkParams): Parámetros congelados
        scan_ids: Escaneos de validación
        data_root (str): Directorio de datos
        loss_params (LossParams): Parámetros del mapa de pesos
        hilos (int): Hilos de la inferencia por rebanada
        escaneos: Escaneos ya cargados (evita releer los archivos)

    Returns:
        tuple: (pérdida media, Dice medio)
    """
    if not scan_ids:
        raise ConfigError("La lista de validación está vacía")
    registros = escaneos if escaneos is not None else [cargar_escaneo(data_root, s) for s in scan_ids]
    perdidas, dices = [], []
    for scan in registros:
        probs = probability_volume(params, scan, hilos)
        _, reporte = segment_volume(params, scan, None, hilos, probs=probs)
        for z in range(scan.depth):
            pesos = weight_map(scan.mask[:, :, z], loss_params)
            perdidas.append(weighted_cross_entropy(probs[0][..., z], scan.mask[:, :, z], pesos).perdida_media)
        dices.append(reporte.dice_pre)
    return float(np.mean(perdidas)), float(np.mean(dices))


# ---------------------------------------------------------------------------
# Entrenamiento
# ---------------------------------------------------------------------------

def _semilla_paso(seed: int, epoca: int, paso: int) -> int:
    return int(np.random.SeedSequence([seed, epoca, paso]).generate_state(1)[0])


class EscaneoNormalizado(NamedTuple):
    """Escaneo listo para la red: intensidades en [0, 1] con el dtype de la red."""

    scan_id: str
    volumen: np.ndarray
    mascara: np.ndarray


def _cargar_entrenamiento(ids: Sequence[str], data_root: str, rotaciones: Optional[Sequence[int]],
                          hilos: int, dtype=np.float64) -> List[EscaneoNormalizado]:
    # Las HU crudas se descartan en cuanto se normaliza cada variante
    def cargar(scan_id: str) -> List[EscaneoNormalizado]:
        registro = cargar_escaneo(data_root, scan_id)
        variantes = augment_all(registro, rotaciones) if rotaciones else [registro]
        return [EscaneoNormalizado(v.scan_id, normalize_hu(v.volume).astype(dtype, copy=False), v.mask)
                for v in variantes]

    if hilos > 1:
        with ThreadPoolExecutor(max_workers=hilos) as pool:
            grupos = list(pool.map(cargar, ids))
    else:
        grupos = [cargar(s) for s in ids]
    return [r for g in grupos for r in g]


def _estado_reanudacion(salida: str, net_config: NetworkConfig):
    ruta_log = os.path.join(salida, ARCHIVO_LOG)
    ruta_opt = os.path.join(salida, ARCHIVO_OPTIMIZADOR)
    if not os.path.exists(ruta_log):
        return None
    log = TrainLog.cargar(ruta_log)
    if not log.registros:
        return None
    ultimo = log.registros[-1]
    params = load_checkpoint(os.path.join(salida, ultimo.checkpoint), net_config)
    estado = EstadoOptimizador.cargar(ruta_opt) if os.path.exists(ruta_opt) else EstadoOptimizador()
    logger.info(f"Reanudando desde la época {ultimo.epoch} ({ultimo.checkpoint})")
    return log, params, estado


def _podar_checkpoints(salida: str, log: TrainLog) -> None:
    """Conserva solo los checkpoints de la mejor época y de la última."""
    conservar = {log.registros[-1].checkpoint}
    if log.mejor is not None:
        conservar.add(log.mejor.checkpoint)
    for r in log.registros:
        ruta = os.path.join(salida, r.checkpoint)
        if r.checkpoint not in conservar and os.path.exists(ruta):
            os.remove(ruta)
            logger.debug(f"Checkpoint descartado: {r.checkpoint}")


def train(net_config: NetworkConfig, train_config: TrainConfig, fold: Pliegue, data_root: str,
          salida: str, rotaciones: Optional[Sequence[int]] = None, reanudar: bool = False,
          validacion: Optional[Callable[[NetworkParams], Tuple[float, float]]] = None,
          hilos: int = THREADS, cache_pesos: Optional[MapaPesosCache] = None,
          al_terminar_epoca: Optional[Callable[[RegistroEpoca], None]] = None) -> Tuple[NetworkParams, TrainLog]:
    """
    Entrena la red sobre un pliegue con parada temprana.

    Args:
        net_config (NetworkConfig): Arquitectura
        train_config (TrainConfig): Hiperparámetros de entrenamiento
        fold (Pliegue): Escaneos de entrenamiento y validación
        data_root (str): Directorio con los escaneos del pliegue
        salida (str): Directorio de checkpoints y TrainLog
        rotaciones: Ángulos de aumentación en memoria (None si los
            escaneos ya están aumentados)
        reanudar (bool): Continuar desde el último checkpoint de `salida`
        validacion: Función (params) -> (pérdida, dice); por defecto `validate`
        hilos (int): Hilos para carga e inferencia
        cache_pesos (MapaPesosCache, optional): Caché de mapas de peso
        al_terminar_epoca: Callback por época (la CLI imprime el resumen)

    Returns:
        tuple: (parámetros de la mejor época, TrainLog)
    """
    if train_config.dropout_p is not None:
        net_config = replace(net_config, dropout_p=train_config.dropout_p)
    net_config.validar()
    if not fold.train:
        raise ConfigError("El pliegue no tiene escaneos de entrenamiento")
    os.makedirs(salida, exist_ok=True)

    escaneos = _cargar_entrenamiento(fold.train, data_root, rotaciones, hilos, resolver_dtype(net_config.dtype))
    muestras = [(i, z) for i, e in enumerate(escaneos) for z in range(e.volumen.shape[2])]
    pesos_cache = cache_pesos if cache_pesos is not None else MapaPesosCache(train_config.loss)

    if validacion is None:
        ids_val = sin_rotaciones(fold.validation)
        escaneos_val = [cargar_escaneo(data_root, s) for s in ids_val] if ids_val else None

        def validacion(p: NetworkParams) -> Tuple[float, float]:
            return validate(p, ids_val, data_root, train_config.loss, hilos, escaneos_val)

    log, params, estado = TrainLog(), None, EstadoOptimizador()
    if reanudar:
        previo = _estado_reanudacion(salida, net_config)
        if previo is not None:
            log, params, estado = previo
    if params is None:
        params = build(net_config, train_config.seed)

    mejor_valor = min((r.val_loss for r in log.registros), default=math.inf)
    sin_mejora = 0
    for r in log.registros:
        sin_mejora = 0 if r.epoch == log.mejor_epoca else sin_mejora + 1
    D = net_config.input_depth
    epoca = log.registros[-1].epoch if log.registros else 0

    logger.info(f"Entrenamiento: {len(escaneos)} escaneos, {len(muestras)} rebanadas por época",
                extra={"detalles": {"config_red": net_config.a_dict(), "config": asdict(train_config)}})

    while epoca < train_config.max_epochs and sin_mejora < train_config.patience:
        epoca += 1
        inicio = time.perf_counter()
        orden = np.random.default_rng([train_config.seed, epoca]).permutation(len(muestras))
        perdida_suma, pixeles = 0.0, 0
        params.zero_grad()

        for paso, k in enumerate(orden):
            i, z = muestras[k]
            escaneo = escaneos[i]
            ventana = extract_window(escaneo.volumen, z, D)
            cache: Dict = {}
            probs = forward(params, ventana, mode="train", seed=_semilla_paso(train_config.seed, epoca, paso),
                            cache=cache)
            pesos = pesos_cache.obtener(escaneo.scan_id, z, escaneo.mascara[:, :, z])
            resultado = weighted_cross_entropy(probs, escaneo.mascara[:, :, z], pesos)
            if not np.isfinite(resultado.perdida):
                raise EntrenamientoError("La pérdida divergió",
                                         {"epoca": epoca, "paso": paso, "scan_id": escaneo.scan_id, "rebanada": z})
            backward(params, cache, resultado.grad_logits)
            perdida_suma += resultado.perdida
            pixeles += escaneo.mascara[:, :, z].size
            if (paso + 1) % train_config.batch_size == 0 or paso == len(orden) - 1:
                optimizer_step(params.parametros, None, estado, train_config)

        val_loss, val_dice = validacion(params)
        checkpoint = save_checkpoint(params, os.path.join(salida, f"epoca_{epoca:04d}.ckpt"))
        estado.guardar(os.path.join(salida, ARCHIVO_OPTIMIZADOR))
        registro = RegistroEpoca(epoca, perdida_suma, perdida_suma / max(pixeles, 1), val_loss, val_dice,
                                 time.perf_counter() - inicio, os.path.basename(checkpoint))
        log.agregar(registro)
        if val_loss < mejor_valor:
            mejor_valor, log.mejor_epoca, sin_mejora = val_loss, epoca, 0
        else:
            sin_mejora += 1
        log.guardar(os.path.join(salida, ARCHIVO_LOG))
        _podar_checkpoints(salida, log)

        log_epoca({"epoca": epoca, "perdida_suma": perdida_suma, "perdida_media": registro.train_loss_mean,
                   "perdida_validacion": val_loss, "dice_validacion": val_dice, "segundos": registro.seconds})
        if al_terminar_epoca is not None:
            al_terminar_epoca(registro)

    if sin_mejora >= train_config.patience:
        logger.info(f"Parada temprana en la época {epoca}: {sin_mejora} épocas sin mejora")
    mejor = log.mejor
    if mejor is None:
        raise EntrenamientoError("No hay una época con pérdida de validación finita")
    log_metrica("mejor_epoca", mejor.epoch, {"val_loss": mejor.val_loss, "val_dice": mejor.val_dice})
    return load_checkpoint(os.path.join(salida, mejor.checkpoint), net_config), log
