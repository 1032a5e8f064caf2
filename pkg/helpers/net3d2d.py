#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Red de codificación 3D y decodificación 2D.
Este módulo ensambla la red completa: etapas de codificación con
convoluciones 3D (sin relleno en profundidad) y pooling espacial, un cuello
que colapsa la profundidad restante, dropout, etapas de decodificación 2D
con convoluciones transpuestas y skips crop&concat tomados de la rebanada
central de cada etapa del codificador, y una cabeza 1x1 con softmax de dos
clases. También persiste y recupera los parámetros en checkpoints binarios.
"""

import copy
import json
import os
import struct
from collections import OrderedDict
from dataclasses import dataclass, field, asdict, replace
from typing import Any, Dict, List, Optional, Tuple
import numpy as np
from config import (
    NET_INPUT_HEIGHT, NET_INPUT_WIDTH, NET_INPUT_DEPTH, NET_STAGES, NET_CHANNELS,
    NET_CONVS_PER_STAGE, NET_DROPOUT_P, NET_NUM_CLASSES, NET_DTYPE,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION
)
from helpers.error_handler import ConfigError, DatosError, FormatoError, CheckpointError, InternoError
from helpers.logger import Logger
from helpers.tensor_core import (
    Tensor, ConvSpec, BatchNormState, resolver_dtype, inicializar_kernel,
    conv_forward, conv_backward, maxpool_spatial_forward, maxpool_spatial_backward,
    deconv2d_forward, deconv2d_backward, batchnorm, batchnorm_backward,
    dropout, dropout_backward, softmax2, relu, relu_backward
)

logger = Logger.get_logger()


@dataclass(frozen=True)
class NetworkConfig:
    """Hiperparámetros de arquitectura de la red."""

    input_height: int = NET_INPUT_HEIGHT
    input_width: int = NET_INPUT_WIDTH
    input_depth: int = NET_INPUT_DEPTH
    stages: int = NET_STAGES
    channels: Tuple[int, ...] = tuple(NET_CHANNELS)
    convs_per_stage: int = NET_CONVS_PER_STAGE
    dropout_p: float = NET_DROPOUT_P
    num_classes: int = NET_NUM_CLASSES
    dtype: str = NET_DTYPE

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))

    def restricciones_fallidas(self) -> List[str]:
        """
        Evalúa los invariantes de la configuración.

        Returns:
            list: Descripción de cada restricción violada (vacía si es válida)
        """
        fallidas = []
        if self.stages < 1:
            fallidas.append(f"stages >= 1 (recibido {self.stages})")
        if self.convs_per_stage < 1:
            fallidas.append(f"convs_per_stage >= 1 (recibido {self.convs_per_stage})")
        if self.input_height < 1 or self.input_width < 1 or self.input_depth < 1:
            fallidas.append("input_height, input_width e input_depth deben ser positivos")
        factor = 2 ** max(self.stages, 0)
        if self.input_height % factor:
            fallidas.append(f"input_height mod 2^S == 0 ({self.input_height} no es divisible por {factor})")
        if self.input_width % factor:
            fallidas.append(f"input_width mod 2^S == 0 ({self.input_width} no es divisible por {factor})")
        if self.profundidad_cuello < 1:
            fallidas.append(f"D - 2*convs_per_stage*S >= 1 (resulta {self.profundidad_cuello})")
        if len(self.channels) != self.stages + 1:
            fallidas.append(f"channels debe tener S+1 = {self.stages + 1} entradas (tiene {len(self.channels)})")
        if any(c < 1 for c in self.channels):
            fallidas.append("todas las entradas de channels deben ser positivas")
        if not 0.0 <= self.dropout_p < 1.0:
            fallidas.append(f"dropout_p en [0, 1) (recibido {self.dropout_p})")
        if self.num_classes != 2:
            fallidas.append(f"num_classes == 2 (recibido {self.num_classes})")
        if self.dtype not in ("float64", "float32"):
            fallidas.append(f"dtype en {{float64, float32}} (recibido {self.dtype})")
        return fallidas

    def validar(self) -> None:
        fallidas = self.restricciones_fallidas()
        if fallidas:
            raise ConfigError("Configuración de red inválida", {"restricciones": fallidas})

    @property
    def profundidad_cuello(self) -> int:
        """Profundidad que llega al cuello antes del colapso."""
        return self.input_depth - 2 * self.convs_per_stage * self.stages

    def a_dict(self) -> Dict[str, Any]:
        datos = asdict(self)
        datos["channels"] = list(self.channels)
        return datos


@dataclass
class NetworkParams:
    """
    Registro ordenado de parámetros de la red, indexado por ruta de capa.
    Las estadísticas acumuladas de batchnorm viven aparte en `estados_bn`.
    """

    config: NetworkConfig
    seed: int
    parametros: "OrderedDict[str, Tensor]" = field(default_factory=OrderedDict)
    estados_bn: "OrderedDict[str, BatchNormState]" = field(default_factory=OrderedDict)

    def registrar(self, ruta: str, datos: np.ndarray) -> Tensor:
        if ruta in self.parametros:
            raise InternoError(f"Ruta de capa duplicada: {ruta}", {"ruta": ruta})
        tensor = Tensor(datos, requires_grad=True, grad=np.zeros_like(datos))
        self.parametros[ruta] = tensor
        return tensor

    def zero_grad(self) -> None:
        for tensor in self.parametros.values():
            tensor.zero_grad()

    def numero_parametros(self) -> int:
        return int(sum(t.size for t in self.parametros.values()))

    def clonar(self) -> "NetworkParams":
        return copy.deepcopy(self)

    @property
    def dtype(self) -> np.dtype:
        return resolver_dtype(self.config.dtype)


# ---------------------------------------------------------------------------
# Geometría de capas
# ---------------------------------------------------------------------------

def _spec_3d(c_in: int, c_out: int) -> ConvSpec:
    # Relleno 1 en los ejes espaciales y 0 en profundidad: cada conv recorta 2 rebanadas
    return ConvSpec((3, 3, 3), (1, 1, 1), (1, 1, 0), c_in, c_out)


def _spec_2d(c_in: int, c_out: int) -> ConvSpec:
    return ConvSpec((3, 3), (1, 1), (1, 1), c_in, c_out)


def _spec_cabeza(c_in: int, c_out: int) -> ConvSpec:
    return ConvSpec((1, 1), (1, 1), (0, 0), c_in, c_out)


def _bloques(config: NetworkConfig) -> List[Tuple[str, str, ConvSpec]]:
    """Lista (ruta, tipo, spec) de cada capa con parámetros, en orden de ejecución."""
    S, cps, ch = config.stages, config.convs_per_stage, config.channels
    capas = []
    c_in = 1
    for s in range(S):
        for i in range(cps):
            capas.append((f"enc{s}.bloque{i}", "conv_bn", _spec_3d(c_in if i == 0 else ch[s], ch[s])))
        c_in = ch[s]
    for i in range(cps):
        capas.append((f"cuello.bloque{i}", "conv_bn", _spec_2d(ch[S - 1] if i == 0 else ch[S], ch[S])))
    c_actual = ch[S]
    for s in reversed(range(S)):
        capas.append((f"dec{s}.deconv", "deconv", (c_actual, ch[s])))
        for i in range(cps):
            capas.append((f"dec{s}.bloque{i}", "conv_bn", _spec_2d(2 * ch[s] if i == 0 else ch[s], ch[s])))
        c_actual = ch[s]
    capas.append(("cabeza.conv", "conv", _spec_cabeza(ch[0], config.num_classes)))
    return capas


def plan_formas(config: NetworkConfig) -> List[Dict[str, Any]]:
    """
    Traza simbólicamente la forma de cada mapa de características sin reservar memoria.

    Args:
        config (NetworkConfig): Configuración de la red

    Returns:
        list: Entradas {"capa": ruta, "forma": tupla} en orden de ejecución
    """
    config.validar()
    S, cps, ch = config.stages, config.convs_per_stage, config.channels
    h, w, d = config.input_height, config.input_width, config.input_depth
    plan = [{"capa": "entrada", "forma": (1, h, w, d)}]
    for s in range(S):
        for i in range(cps):
            d -= 2
            plan.append({"capa": f"enc{s}.bloque{i}", "forma": (ch[s], h, w, d)})
        plan.append({"capa": f"enc{s}.centro", "forma": (ch[s], h, w)})
        h, w = h // 2, w // 2
        plan.append({"capa": f"enc{s}.pool", "forma": (ch[s], h, w, d)})
    plan.append({"capa": "cuello.pre_colapso", "forma": (ch[S - 1], h, w, d)})
    plan.append({"capa": "cuello.post_colapso", "forma": (ch[S - 1], h, w, 1)})
    for i in range(cps):
        plan.append({"capa": f"cuello.bloque{i}", "forma": (ch[S], h, w)})
    for s in reversed(range(S)):
        h, w = h * 2, w * 2
        plan.append({"capa": f"dec{s}.deconv", "forma": (ch[s], h, w)})
        plan.append({"capa": f"dec{s}.crop_concat", "forma": (2 * ch[s], h, w)})
        for i in range(cps):
            plan.append({"capa": f"dec{s}.bloque{i}", "forma": (ch[s], h, w)})
    plan.append({"capa": "cabeza.conv", "forma": (config.num_classes, h, w)})
    return plan


def indice_centro_entrada(config: NetworkConfig, etapa: int) -> int:
    """
    Índice de la rebanada de entrada alineada con la rebanada central del mapa
    previo al pooling de la etapa `etapa` del codificador.

    Args:
        config (NetworkConfig): Configuración de la red
        etapa (int): Etapa del codificador (0..S-1)

    Returns:
        int: Índice de profundidad en el volumen de entrada
    """
    recorte = config.convs_per_stage * (etapa + 1)
    d = config.input_depth - 2 * recorte
    return (d - 1) // 2 + recorte


# ---------------------------------------------------------------------------
# Construcción
# ---------------------------------------------------------------------------

def build(config: NetworkConfig, seed: int = 0) -> NetworkParams:
    """
    Construye e inicializa de forma determinista el registro de parámetros.

    Args:
        config (NetworkConfig): Configuración de la red
        seed (int): Semilla de inicialización

    Returns:
        NetworkParams: Parámetros inicializados
    """
    config.validar()
    dtype = resolver_dtype(config.dtype)
    rng = np.random.default_rng(seed)
    params = NetworkParams(config=config, seed=seed)

    for ruta, tipo, spec in _bloques(config):
        if tipo == "deconv":
            c_in, c_out = spec
            params.registrar(f"{ruta}.weight",
                             inicializar_kernel(rng, (c_in, c_out, 4, 4), dtype, fan_in=c_in * 16))
            params.registrar(f"{ruta}.bias", np.zeros(c_out, dtype=dtype))
            continue
        if tipo == "conv_bn":
            params.registrar(f"{ruta}.conv.weight", inicializar_kernel(rng, spec.forma_pesos, dtype))
            params.registrar(f"{ruta}.conv.bias", np.zeros(spec.out_channels, dtype=dtype))
            estado = BatchNormState.nuevo(spec.out_channels, dtype)
            params.registrar(f"{ruta}.bn.gamma", estado.gamma.copy())
            params.registrar(f"{ruta}.bn.beta", estado.beta.copy())
            params.estados_bn[f"{ruta}.bn"] = estado
        else:
            params.registrar(f"{ruta}.weight", inicializar_kernel(rng, spec.forma_pesos, dtype))
            params.registrar(f"{ruta}.bias", np.zeros(spec.out_channels, dtype=dtype))

    logger.debug(f"Red construida: {len(params.parametros)} tensores, {params.numero_parametros()} parámetros",
                 extra={"detalles": {"config": config.a_dict(), "seed": seed}})
    return params


# ---------------------------------------------------------------------------
# Operaciones de la arquitectura
# ---------------------------------------------------------------------------

def center_slice_extract(feature) -> np.ndarray:
    """
    Rebanada central de profundidad (índice floor((d−1)/2)).

    Args:
        feature: Arreglo [C, h, w, d]

    Returns:
        numpy.ndarray: Arreglo [C, h, w]
    """
    x = np.asarray(feature)
    d = x.shape[-1]
    if d < 1:
        raise ConfigError("center_slice_extract requiere d >= 1", {"forma": x.shape})
    return x[..., (d - 1) // 2]


def _desplazamiento_crop(forma_dec: Tuple[int, ...], forma_enc: Tuple[int, ...]) -> Tuple[int, int]:
    h, w = forma_dec[1:]
    he, we = forma_enc[1:]
    if he < h or we < w:
        raise InternoError("El mapa del codificador es más pequeño que el del decodificador",
                           {"forma_decodificador": forma_dec, "forma_codificador": forma_enc})
    return (he - h) // 2, (we - w) // 2


def crop_concat(decoder_map, encoder_center) -> np.ndarray:
    """
    Recorta centrado el mapa del codificador y lo concatena en el eje de canales.

    Args:
        decoder_map: Arreglo [C1, h, w]
        encoder_center: Arreglo [C2, h', w'] con h' >= h, w' >= w

    Returns:
        numpy.ndarray: Arreglo [C1 + C2, h, w]
    """
    dec = np.asarray(decoder_map)
    enc = np.asarray(encoder_center)
    oy, ox = _desplazamiento_crop(dec.shape, enc.shape)
    h, w = dec.shape[1:]
    return np.concatenate([dec, enc[:, oy:oy + h, ox:ox + w]], axis=0)


def crop_concat_backward(grad_out, canales_decoder: int,
                         forma_encoder: Tuple[int, ...]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Reparte el gradiente entre la rama del decodificador y la del codificador.

    Returns:
        tuple: (grad_decoder [C1, h, w], grad_encoder [C2, h', w'])
    """
    g = np.asarray(grad_out)
    grad_dec = g[:canales_decoder]
    oy, ox = _desplazamiento_crop(grad_dec.shape, forma_encoder)
    h, w = grad_dec.shape[1:]
    grad_enc = np.zeros(forma_encoder, dtype=g.dtype)
    grad_enc[:, oy:oy + h, ox:ox + w] = g[canales_decoder:]
    return grad_dec, grad_enc


def depth_collapse(feature) -> np.ndarray:
    """
    Colapsa el eje de profundidad por su media (d=1 es un simple reshape).

    Args:
        feature: Arreglo [C, h, w, d]

    Returns:
        numpy.ndarray: Arreglo [C, h, w]
    """
    x = np.asarray(feature)
    if x.shape[-1] < 1:
        raise ConfigError("depth_collapse requiere d >= 1", {"forma": x.shape})
    if x.shape[-1] == 1:
        return x[..., 0]
    return x.mean(axis=-1)


def depth_collapse_backward(grad_out, profundidad: int) -> np.ndarray:
    g = np.asarray(grad_out)
    return np.repeat(g[..., None] / profundidad, profundidad, axis=-1)


# ---------------------------------------------------------------------------
# Paso hacia adelante y hacia atrás
# ---------------------------------------------------------------------------

def _conv_bn_relu(x, params: NetworkParams, ruta: str, spec: ConvSpec, modo: str,
                  cinta: Optional[list], actualizar: bool) -> np.ndarray:
    p = params.parametros
    w = p[f"{ruta}.conv.weight"].data
    z = conv_forward(x, spec, w, p[f"{ruta}.conv.bias"].data)
    estado = replace(params.estados_bn[f"{ruta}.bn"], gamma=p[f"{ruta}.bn.gamma"].data,
                     beta=p[f"{ruta}.bn.beta"].data, mode=modo)
    zn, nuevo, cache_bn = batchnorm(z, estado)
    if modo == "train" and actualizar:
        params.estados_bn[f"{ruta}.bn"] = replace(nuevo, gamma=nuevo.gamma.copy(), beta=nuevo.beta.copy())
    a = relu(zn)
    if cinta is not None:
        cinta.append(("conv_bn_relu", ruta, spec, x, cache_bn, zn))
    return a


def forward(params: NetworkParams, volume, mode: str = "infer", seed: int = 0,
            cache: Optional[Dict[str, Any]] = None, actualizar_estadisticas: bool = True) -> np.ndarray:
    """
    Ejecuta la red sobre una ventana de rebanadas y produce el mapa de
    probabilidades de dos clases de la rebanada central.

    Args:
        params (NetworkParams): Parámetros de la red
        volume: Arreglo [1, H, W, D] con la forma de la configuración
        mode (str): "train" o "infer"
        seed (int): Semilla de la máscara de dropout (solo en train)
        cache (dict, optional): Si se proporciona, se llena con las
            activaciones necesarias para backward
        actualizar_estadisticas (bool): Actualizar las medias móviles de
            batchnorm en modo train

    Returns:
        numpy.ndarray: Probabilidades [2, H, W]
    """
    config = params.config
    if mode not in ("train", "infer"):
        raise ConfigError(f"Modo desconocido: {mode}")
    x = np.asarray(volume)
    esperado = (1, config.input_height, config.input_width, config.input_depth)
    if x.shape != esperado:
        ejes = [i for i, (a, b) in enumerate(zip(x.shape, esperado)) if a != b] if x.ndim == 4 else None
        raise ConfigError("La forma del volumen no coincide con la configuración",
                          {"esperado": esperado, "recibido": x.shape, "ejes": ejes})
    x = x.astype(params.dtype, copy=False)
    cinta = [] if cache is not None else None
    S, cps = config.stages, config.convs_per_stage
    bloques = iter(_bloques(config))
    skips = []

    for s in range(S):
        for _ in range(cps):
            ruta, _, spec = next(bloques)
            x = _conv_bn_relu(x, params, ruta, spec, mode, cinta, actualizar_estadisticas)
        skips.append(center_slice_extract(x))
        if cinta is not None:
            cinta.append(("centro", s, x.shape))
        forma = x.shape
        x, indices = maxpool_spatial_forward(x)
        if cinta is not None:
            cinta.append(("pool", s, indices, forma))

    profundidad = x.shape[-1]
    x = depth_collapse(x)
    if cinta is not None:
        cinta.append(("colapso", profundidad))

    for _ in range(cps):
        ruta, _, spec = next(bloques)
        x = _conv_bn_relu(x, params, ruta, spec, mode, cinta, actualizar_estadisticas)

    x, mascara = dropout(x, config.dropout_p, mode, seed)
    if cinta is not None:
        cinta.append(("dropout", mascara))

    p = params.parametros
    for s in reversed(range(S)):
        ruta, _, _ = next(bloques)
        entrada = x
        x = deconv2d_forward(x, p[f"{ruta}.weight"].data, p[f"{ruta}.bias"].data)
        if cinta is not None:
            cinta.append(("deconv", ruta, entrada))
        canales = x.shape[0]
        x = crop_concat(x, skips[s])
        if cinta is not None:
            cinta.append(("crop_concat", s, canales, skips[s].shape))
        for _ in range(cps):
            ruta, _, spec = next(bloques)
            x = _conv_bn_relu(x, params, ruta, spec, mode, cinta, actualizar_estadisticas)

    ruta, _, spec = next(bloques)
    logits = conv_forward(x, spec, p[f"{ruta}.weight"].data, p[f"{ruta}.bias"].data)
    if cinta is not None:
        cinta.append(("conv", ruta, spec, x))
        cache["cinta"] = cinta
        cache["logits"] = logits
        cache["forma_entrada"] = esperado
    return softmax2(logits)


def backward(params: NetworkParams, cache: Dict[str, Any], grad_logits) -> np.ndarray:
    """
    Retropropaga el gradiente respecto a los logits a través de la red,
    acumulando en la ranura de gradiente de cada parámetro registrado.

    Args:
        params (NetworkParams): Parámetros usados en forward
        cache (dict): Cache llenado por forward
        grad_logits: Gradiente [2, H, W] respecto a los logits

    Returns:
        numpy.ndarray: Gradiente respecto al volumen de entrada [1, H, W, D]
    """
    if "cinta" not in cache:
        raise InternoError("backward requiere el cache de un forward con cache")
    p = params.parametros
    g = np.asarray(grad_logits)
    grad_skips: Dict[int, np.ndarray] = {}

    for entrada in reversed(cache["cinta"]):
        tipo = entrada[0]
        if tipo == "conv":
            _, ruta, spec, x = entrada
            g, gw, gb = conv_backward(g, x, spec, p[f"{ruta}.weight"].data)
            p[f"{ruta}.weight"].acumular_grad(gw)
            p[f"{ruta}.bias"].acumular_grad(gb)
        elif tipo == "conv_bn_relu":
            _, ruta, spec, x, cache_bn, zn = entrada
            g = relu_backward(g, zn)
            g, ggamma, gbeta = batchnorm_backward(g, cache_bn)
            p[f"{ruta}.bn.gamma"].acumular_grad(ggamma)
            p[f"{ruta}.bn.beta"].acumular_grad(gbeta)
            g, gw, gb = conv_backward(g, x, spec, p[f"{ruta}.conv.weight"].data)
            p[f"{ruta}.conv.weight"].acumular_grad(gw)
            p[f"{ruta}.conv.bias"].acumular_grad(gb)
        elif tipo == "crop_concat":
            _, s, canales, forma_skip = entrada
            g, grad_skips[s] = crop_concat_backward(g, canales, forma_skip)
        elif tipo == "deconv":
            _, ruta, x = entrada
            g, gw, gb = deconv2d_backward(g, x, p[f"{ruta}.weight"].data)
            p[f"{ruta}.weight"].acumular_grad(gw)
            p[f"{ruta}.bias"].acumular_grad(gb)
        elif tipo == "dropout":
            g = dropout_backward(g, entrada[1])
        elif tipo == "colapso":
            g = depth_collapse_backward(g, entrada[1])
        elif tipo == "pool":
            _, s, indices, forma = entrada
            g = maxpool_spatial_backward(g, indices, forma)
        elif tipo == "centro":
            _, s, forma = entrada
            if s in grad_skips:
                g = g.copy()
                g[..., (forma[-1] - 1) // 2] += grad_skips.pop(s)
        else:
            raise InternoError(f"Entrada de cinta desconocida: {tipo}")
    return g


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_DTYPE_TAGS = {np.dtype(np.float64): 0, np.dtype(np.float32): 1}
_TAG_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}


def _entradas_checkpoint(params: NetworkParams) -> "OrderedDict[str, np.ndarray]":
    entradas = OrderedDict((ruta, t.data) for ruta, t in params.parametros.items())
    for ruta, estado in params.estados_bn.items():
        entradas[f"{ruta}.running_mean"] = np.asarray(estado.running_mean)
        entradas[f"{ruta}.running_var"] = np.asarray(estado.running_var)
    return entradas


def save_checkpoint(params: NetworkParams, path: str) -> str:
    """
    Guarda los parámetros en el formato binario little-endian de checkpoints.

    Args:
        params (NetworkParams): Parámetros a guardar
        path (str): Ruta del archivo

    Returns:
        str: Ruta escrita
    """
    if not params.parametros:
        raise ConfigError("No se puede guardar un registro de parámetros vacío")
    registro = {"config": params.config.a_dict(), "seed": int(params.seed), "dtype": params.config.dtype}
    cabecera = json.dumps(registro, sort_keys=True).encode("utf-8")
    entradas = _entradas_checkpoint(params)

    directorio = os.path.dirname(path)
    if directorio:
        os.makedirs(directorio, exist_ok=True)
    temporal = f"{path}.tmp"
    with open(temporal, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(cabecera)))
        f.write(cabecera)
        f.write(struct.pack("<I", len(entradas)))
        for ruta, datos in entradas.items():
            nombre = ruta.encode("utf-8")
            tag = _DTYPE_TAGS[np.dtype(datos.dtype)]
            f.write(struct.pack("<I", len(nombre)))
            f.write(nombre)
            f.write(struct.pack("<BB", tag, datos.ndim))
            f.write(struct.pack(f"<{datos.ndim}I", *datos.shape))
            f.write(np.ascontiguousarray(datos, dtype=_TAG_DTYPES[tag]).tobytes())
    os.replace(temporal, path)
    logger.debug(f"Checkpoint guardado en {path}", extra={"detalles": {"entradas": len(entradas)}})
    return path


def _leer(f, n: int, que: str) -> bytes:
    datos = f.read(n)
    if len(datos) != n:
        raise DatosError(f"Checkpoint truncado al leer {que}",
                         {"bytes_esperados": n, "bytes_leidos": len(datos)})
    return datos


def load_checkpoint(path: str, config: Optional[NetworkConfig] = None) -> NetworkParams:
    """
    Carga un checkpoint y reconstruye el registro de parámetros.

    Args:
        path (str): Ruta del checkpoint
        config (NetworkConfig, optional): Configuración esperada; si se da,
            cualquier discrepancia se reporta por ruta de capa

    Returns:
        NetworkParams: Parámetros cargados
    """
    if not os.path.exists(path):
        raise DatosError(f"No existe el checkpoint {path}", {"path": path})

    with open(path, "rb") as f:
        magia = f.read(len(CHECKPOINT_MAGIC))
        if magia != CHECKPOINT_MAGIC:
            raise FormatoError("Magia de checkpoint incorrecta", {"path": path, "magia": magia.hex()})
        version, largo = struct.unpack("<II", _leer(f, 8, "la versión"))
        if version != CHECKPOINT_VERSION:
            raise FormatoError("Versión de checkpoint no soportada",
                               {"path": path, "version": version, "soportada": CHECKPOINT_VERSION})
        try:
            registro = json.loads(_leer(f, largo, "el registro de configuración").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatoError("Registro de configuración del checkpoint no es JSON", {"path": path}) from e
        (cantidad,) = struct.unpack("<I", _leer(f, 4, "el número de entradas"))
        entradas = OrderedDict()
        for _ in range(cantidad):
            (n,) = struct.unpack("<I", _leer(f, 4, "la longitud de ruta"))
            ruta = _leer(f, n, "la ruta").decode("utf-8")
            tag, rango = struct.unpack("<BB", _leer(f, 2, f"la cabecera de {ruta}"))
            if tag not in _TAG_DTYPES:
                raise FormatoError(f"Tipo de elemento desconocido en {ruta}", {"tag": tag})
            dims = struct.unpack(f"<{rango}I", _leer(f, 4 * rango, f"las dimensiones de {ruta}"))
            dtype = _TAG_DTYPES[tag]
            bruto = _leer(f, int(np.prod(dims)) * dtype.itemsize, f"los valores de {ruta}")
            entradas[ruta] = np.frombuffer(bruto, dtype=dtype).reshape(dims)
        if f.read(1):
            raise FormatoError("Bytes sobrantes al final del checkpoint", {"path": path})

    try:
        guardada = NetworkConfig(**registro["config"])
        semilla = int(registro["seed"])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatoError(f"Registro de configuración ilegible en el checkpoint: {e}", {"path": path}) from e
    objetivo = config or guardada
    try:
        params = build(objetivo, semilla)
    except ConfigError as e:
        raise CheckpointError("La configuración del checkpoint es inválida", e.detalles) from e

    esperadas = _entradas_checkpoint(params)
    diferencias = []
    for ruta, datos in esperadas.items():
        if ruta not in entradas:
            diferencias.append({"ruta": ruta, "problema": "falta en el checkpoint"})
        elif entradas[ruta].shape != datos.shape:
            diferencias.append({"ruta": ruta, "problema": "forma distinta",
                                "checkpoint": list(entradas[ruta].shape), "esperada": list(datos.shape)})
    for ruta in entradas:
        if ruta not in esperadas:
            diferencias.append({"ruta": ruta, "problema": "no existe en la configuración"})
    if diferencias:
        raise CheckpointError("El checkpoint no coincide con la configuración de red",
                              {"path": path, "diferencias": diferencias})

    dtype = params.dtype
    for ruta, tensor in params.parametros.items():
        tensor.data = entradas[ruta].astype(dtype, copy=True)
        tensor.zero_grad()
    for ruta, estado in list(params.estados_bn.items()):
        params.estados_bn[ruta] = replace(
            estado,
            running_mean=entradas[f"{ruta}.running_mean"].astype(dtype, copy=True),
            running_var=entradas[f"{ruta}.running_var"].astype(dtype, copy=True))
    logger.debug(f"Checkpoint cargado desde {path}")
    return params
