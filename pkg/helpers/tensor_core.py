#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Núcleo tensorial del segmentador.
Este módulo proporciona el contenedor Tensor y las primitivas diferenciables
de la red (convolución 2D/3D, max-pooling espacial, convolución transpuesta,
batch normalization, dropout, softmax de dos clases y ReLU), cada una con
su paso hacia atrás explícito.

Todas las operaciones son funciones puras de sus entradas y de registros de
estado explícitos; los arreglos se manejan con numpy.
"""

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple
import numpy as np
from config import BN_MOMENTUM, BN_EPSILON
from helpers.error_handler import ConfigError, InternoError

DTYPES = {
    "float64": np.float64,
    "float32": np.float32,
}


def resolver_dtype(nombre: str):
    """
    Obtiene el tipo de elemento numpy a partir de su nombre.

    Args:
        nombre (str): "float64" o "float32"

    Returns:
        numpy.dtype: Tipo de elemento
    """
    if nombre not in DTYPES:
        raise ConfigError(f"Tipo de elemento no soportado: {nombre}",
                          {"dtype": nombre, "soportados": sorted(DTYPES)})
    return np.dtype(DTYPES[nombre])


@dataclass(eq=False)
class Tensor:
    """
    Arreglo denso N-dimensional con ranura de gradiente opcional.
    Es el contenedor de los parámetros aprendidos de la red.
    """

    data: np.ndarray
    requires_grad: bool = False
    grad: Optional[np.ndarray] = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if not np.issubdtype(self.data.dtype, np.floating):
            self.data = self.data.astype(np.float64)
        if self.grad is not None and np.shape(self.grad) != self.data.shape:
            raise InternoError("La ranura de gradiente no coincide con los datos",
                               {"forma_datos": self.data.shape, "forma_grad": np.shape(self.grad)})

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.data
        return self.data.astype(dtype)

    def reshape(self, *forma) -> "Tensor":
        """
        Produce un Tensor nuevo con los mismos datos y otra forma.

        Args:
            *forma: Nueva forma (su producto debe coincidir)

        Returns:
            Tensor: Tensor con la nueva forma
        """
        if len(forma) == 1 and isinstance(forma[0], (tuple, list)):
            forma = tuple(forma[0])
        if int(np.prod(forma)) != self.size:
            raise ConfigError("reshape no conserva el número de elementos",
                              {"forma_actual": self.shape, "forma_pedida": tuple(forma)})
        grad = None if self.grad is None else self.grad.reshape(forma)
        return Tensor(self.data.reshape(forma), self.requires_grad, grad)

    def zero_grad(self) -> None:
        """Pone a cero la ranura de gradiente (creándola si no existe)."""
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    def acumular_grad(self, gradiente: np.ndarray) -> None:
        """Suma un gradiente a la ranura del tensor."""
        if gradiente.shape != self.data.shape:
            raise InternoError("Gradiente con forma distinta al parámetro",
                               {"forma_datos": self.shape, "forma_grad": gradiente.shape})
        if self.grad is None:
            self.grad = np.array(gradiente, dtype=self.data.dtype, copy=True)
        else:
            self.grad += gradiente

    @classmethod
    def zeros(cls, forma: Sequence[int], dtype="float64", requires_grad: bool = False) -> "Tensor":
        datos = np.zeros(tuple(forma), dtype=resolver_dtype(dtype) if isinstance(dtype, str) else dtype)
        grad = np.zeros_like(datos) if requires_grad else None
        return cls(datos, requires_grad, grad)


# ---------------------------------------------------------------------------
# Convolución
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvSpec:
    """
    Geometría de una convolución con relleno independiente por eje.
    """

    kernel_shape: Tuple[int, ...]
    stride: Tuple[int, ...]
    padding: Tuple[int, ...]
    in_channels: int
    out_channels: int

    def __post_init__(self):
        n = len(self.kernel_shape)
        if n not in (2, 3):
            raise ConfigError("Solo se soportan kernels de 2 o 3 ejes espaciales",
                              {"kernel_shape": self.kernel_shape})
        if len(self.stride) != n or len(self.padding) != n:
            raise ConfigError("kernel_shape, stride y padding deben tener la misma longitud",
                              {"kernel_shape": self.kernel_shape, "stride": self.stride,
                               "padding": self.padding})
        for eje, (k, s, p) in enumerate(zip(self.kernel_shape, self.stride, self.padding)):
            if k < 1 or s < 1 or p < 0:
                raise ConfigError(f"Geometría inválida en el eje espacial {eje}",
                                  {"eje": eje, "kernel": k, "stride": s, "padding": p})
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError("Los canales deben ser positivos",
                              {"in_channels": self.in_channels, "out_channels": self.out_channels})

    @property
    def ejes(self) -> int:
        return len(self.kernel_shape)

    @property
    def forma_pesos(self) -> Tuple[int, ...]:
        return (self.out_channels, self.in_channels) + tuple(self.kernel_shape)

    def output_extents(self, entrada: Sequence[int]) -> Tuple[int, ...]:
        """
        Calcula la extensión de salida por eje: floor((in + 2·pad − k)/stride) + 1.

        Args:
            entrada: Extensiones espaciales de la entrada

        Returns:
            tuple: Extensiones espaciales de la salida
        """
        if len(entrada) != self.ejes:
            raise ConfigError("Número de ejes espaciales incompatible con el kernel",
                              {"ejes_entrada": len(entrada), "ejes_kernel": self.ejes})
        salida = []
        for eje, (n, k, s, p) in enumerate(zip(entrada, self.kernel_shape, self.stride, self.padding)):
            ext = (n + 2 * p - k) // s + 1
            if n < 1 or ext < 1:
                raise ConfigError(f"La convolución no cabe en el eje espacial {eje}",
                                  {"eje": eje, "entrada": n, "kernel": k, "stride": s, "padding": p})
            salida.append(ext)
        return tuple(salida)


def _validar_conv(entrada: np.ndarray, spec: ConvSpec, pesos: np.ndarray) -> Tuple[int, ...]:
    if entrada.ndim != spec.ejes + 1:
        raise ConfigError("La entrada debe tener forma [C, ejes...]",
                          {"forma_entrada": entrada.shape, "ejes_kernel": spec.ejes})
    if entrada.shape[0] != spec.in_channels:
        raise ConfigError("Canales de entrada incompatibles en el eje 0",
                          {"eje": 0, "esperado": spec.in_channels, "recibido": entrada.shape[0]})
    if pesos.shape != spec.forma_pesos:
        raise ConfigError("Forma de pesos incompatible con ConvSpec",
                          {"esperado": spec.forma_pesos, "recibido": pesos.shape})
    return spec.output_extents(entrada.shape[1:])


def _ventana(offset: Tuple[int, ...], spec: ConvSpec, salida: Tuple[int, ...]) -> tuple:
    """Índices de la subrejilla del arreglo relleno que ve la posición `offset` del kernel."""
    return (slice(None),) + tuple(
        slice(o, o + s * (e - 1) + 1, s) for o, s, e in zip(offset, spec.stride, salida)
    )


def _rellenar(entrada: np.ndarray, spec: ConvSpec) -> np.ndarray:
    return np.pad(entrada, [(0, 0)] + [(p, p) for p in spec.padding])


def _recortar(rellenado: np.ndarray, spec: ConvSpec) -> np.ndarray:
    cortes = (slice(None),) + tuple(slice(p, n - p) for p, n in zip(spec.padding, rellenado.shape[1:]))
    return rellenado[cortes]


def conv_forward(input, spec: ConvSpec, weights, bias) -> np.ndarray:
    """
    Correlación cruzada con relleno de ceros por eje (2 o 3 ejes espaciales).

    Args:
        input: Arreglo [C_in, ejes...]
        spec (ConvSpec): Geometría de la convolución
        weights: Pesos [C_out, C_in, kernel...]
        bias: Sesgos [C_out]

    Returns:
        numpy.ndarray: Salida [C_out, ejes'...]
    """
    x = np.asarray(input)
    w = np.asarray(weights)
    b = np.asarray(bias)
    salida = _validar_conv(x, spec, w)
    if b.shape != (spec.out_channels,):
        raise ConfigError("Forma de sesgos incompatible con ConvSpec",
                          {"esperado": (spec.out_channels,), "recibido": b.shape})

    xp = _rellenar(x, spec)
    out = np.zeros((spec.out_channels,) + salida, dtype=np.result_type(x, w))
    for offset in np.ndindex(*spec.kernel_shape):
        w_off = w[(slice(None), slice(None)) + offset]
        out += np.tensordot(w_off, xp[_ventana(offset, spec, salida)], axes=([1], [0]))
    out += b.reshape((-1,) + (1,) * spec.ejes)
    return out


def _conv_transpuesta(grad_out: np.ndarray, pesos: np.ndarray, spec: ConvSpec,
                      forma_entrada: Tuple[int, ...]) -> np.ndarray:
    """Adjunto de la correlación respecto a la entrada (sin sesgo)."""
    salida = spec.output_extents(forma_entrada)
    rellenada = tuple(n + 2 * p for n, p in zip(forma_entrada, spec.padding))
    gxp = np.zeros((spec.in_channels,) + rellenada, dtype=np.result_type(grad_out, pesos))
    for offset in np.ndindex(*spec.kernel_shape):
        w_off = pesos[(slice(None), slice(None)) + offset]
        gxp[_ventana(offset, spec, salida)] += np.tensordot(w_off, grad_out, axes=([0], [0]))
    return _recortar(gxp, spec)


def _grad_pesos(grad_out: np.ndarray, entrada: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Gradiente de la correlación respecto a los pesos."""
    salida = tuple(grad_out.shape[1:])
    xp = _rellenar(entrada, spec)
    ejes = list(range(1, spec.ejes + 1))
    gw = np.zeros(spec.forma_pesos, dtype=np.result_type(grad_out, entrada))
    for offset in np.ndindex(*spec.kernel_shape):
        gw[(slice(None), slice(None)) + offset] = np.tensordot(
            grad_out, xp[_ventana(offset, spec, salida)], axes=(ejes, ejes))
    return gw


def conv_backward(grad_out, saved_input, spec: ConvSpec, weights) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Adjuntos exactos de conv_forward.

    Args:
        grad_out: Gradiente de la salida [C_out, ejes'...]
        saved_input: Entrada guardada del paso hacia adelante
        spec (ConvSpec): Geometría usada en el paso hacia adelante
        weights: Pesos usados en el paso hacia adelante

    Returns:
        tuple: (grad_input, grad_weights, grad_bias)
    """
    g = np.asarray(grad_out)
    x = np.asarray(saved_input)
    w = np.asarray(weights)
    try:
        salida = _validar_conv(x, spec, w)
    except ConfigError as e:
        raise InternoError("Contexto guardado inconsistente en conv_backward", e.detalles) from e
    if g.shape != (spec.out_channels,) + salida:
        raise InternoError("grad_out no coincide con la salida de conv_forward",
                           {"esperado": (spec.out_channels,) + salida, "recibido": g.shape})

    grad_input = _conv_transpuesta(g, w, spec, x.shape[1:])
    grad_weights = _grad_pesos(g, x, spec)
    grad_bias = g.sum(axis=tuple(range(1, g.ndim)))
    return grad_input, grad_weights, grad_bias


# ---------------------------------------------------------------------------
# Max-pooling espacial 2x2 (la profundidad no se toca)
# ---------------------------------------------------------------------------

def maxpool_spatial_forward(input) -> Tuple[np.ndarray, np.ndarray]:
    """
    Máximo 2x2 sobre los ejes H y W de un arreglo [C, H, W, D].

    Args:
        input: Arreglo [C, H, W, D] con H y W pares

    Returns:
        tuple: (salida [C, H/2, W/2, D], índices argmax en 0..3 por ventana)
    """
    x = np.asarray(input)
    if x.ndim != 4:
        raise ConfigError("maxpool espera un arreglo [C, H, W, D]", {"forma": x.shape})
    c, h, w, d = x.shape
    for eje, n in ((1, h), (2, w)):
        if n % 2:
            raise ConfigError(f"Extensión impar en el eje {eje} para el pooling 2x2",
                              {"eje": eje, "extension": n})
    # Ventanas en orden fila-mayor (dh, dw): el argmax se queda con la primera ocurrencia
    v = x.reshape(c, h // 2, 2, w // 2, 2, d).transpose(0, 1, 3, 5, 2, 4).reshape(c, h // 2, w // 2, d, 4)
    indices = v.argmax(axis=-1)
    salida = np.take_along_axis(v, indices[..., None], axis=-1)[..., 0]
    return salida, indices


def maxpool_spatial_backward(grad_out, indices, forma_entrada) -> np.ndarray:
    """
    Enruta el gradiente a la posición argmax registrada de cada ventana.

    Args:
        grad_out: Gradiente [C, H/2, W/2, D]
        indices: Índices argmax del paso hacia adelante
        forma_entrada: Forma [C, H, W, D] de la entrada original

    Returns:
        numpy.ndarray: Gradiente de la entrada
    """
    g = np.asarray(grad_out)
    if g.shape != indices.shape:
        raise InternoError("grad_out no coincide con los índices del pooling",
                           {"forma_grad": g.shape, "forma_indices": indices.shape})
    c, h, w, d = forma_entrada
    v = np.zeros(g.shape + (4,), dtype=g.dtype)
    np.put_along_axis(v, indices[..., None], g[..., None], axis=-1)
    return v.reshape(c, h // 2, w // 2, d, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(c, h, w, d)


# ---------------------------------------------------------------------------
# Convolución transpuesta 2D (4x4, stride 2)
# ---------------------------------------------------------------------------

def _spec_deconv(pesos: np.ndarray, stride: int, kernel: int) -> ConvSpec:
    if kernel != 4 or stride != 2:
        raise ConfigError("La deconvolución solo admite kernel 4x4 con stride 2",
                          {"kernel": kernel, "stride": stride})
    if pesos.ndim != 4 or pesos.shape[2:] != (kernel, kernel):
        raise ConfigError("Pesos de deconvolución deben ser [C_in, C_out, 4, 4]",
                          {"forma": pesos.shape})
    relleno = (kernel - stride) // 2
    # La deconvolución es el adjunto de esta convolución C_out -> C_in
    return ConvSpec((kernel, kernel), (stride, stride), (relleno, relleno),
                    in_channels=pesos.shape[1], out_channels=pesos.shape[0])


def deconv2d_forward(input, weights, bias=None, stride: int = 2, kernel: int = 4) -> np.ndarray:
    """
    Convolución transpuesta que duplica la resolución espacial.

    Args:
        input: Arreglo [C_in, H, W]
        weights: Pesos [C_in, C_out, 4, 4]
        bias: Sesgos [C_out] (opcional)
        stride (int): Debe ser 2
        kernel (int): Debe ser 4

    Returns:
        numpy.ndarray: Salida [C_out, 2H, 2W]
    """
    x = np.asarray(input)
    w = np.asarray(weights)
    spec = _spec_deconv(w, stride, kernel)
    if x.ndim != 3 or x.shape[0] != w.shape[0]:
        raise ConfigError("Entrada de deconvolución incompatible en el eje 0",
                          {"eje": 0, "forma_entrada": x.shape, "forma_pesos": w.shape})
    forma_salida = (x.shape[1] * stride, x.shape[2] * stride)
    out = _conv_transpuesta(x, w, spec, forma_salida)
    if bias is not None:
        out = out + np.asarray(bias).reshape(-1, 1, 1)
    return out


def deconv2d_backward(grad_out, saved_input, weights, stride: int = 2,
                      kernel: int = 4) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Adjuntos de deconv2d_forward.

    Returns:
        tuple: (grad_input, grad_weights, grad_bias)
    """
    g = np.asarray(grad_out)
    x = np.asarray(saved_input)
    w = np.asarray(weights)
    spec = _spec_deconv(w, stride, kernel)
    if g.shape != (w.shape[1], x.shape[1] * stride, x.shape[2] * stride):
        raise InternoError("grad_out no coincide con la salida de la deconvolución",
                           {"forma_grad": g.shape, "forma_entrada": x.shape})
    grad_input = conv_forward(g, spec, w, np.zeros(w.shape[0], dtype=w.dtype))
    grad_weights = _grad_pesos(x, g, spec)
    grad_bias = g.sum(axis=(1, 2))
    return grad_input, grad_weights, grad_bias


def conv_stride2(input, weights) -> np.ndarray:
    """Convolución 4x4 con stride 2 cuyo adjunto es deconv2d_forward (sin sesgo)."""
    w = np.asarray(weights)
    spec = _spec_deconv(w, 2, 4)
    return conv_forward(input, spec, w, np.zeros(w.shape[0], dtype=w.dtype))


# ---------------------------------------------------------------------------
# Batch normalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BatchNormState:
    """
    Parámetros y estadísticas acumuladas de una capa de batch normalization.
    """

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    epsilon: float = BN_EPSILON
    mode: str = "train"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigError("epsilon de batchnorm debe ser positivo", {"epsilon": self.epsilon})
        if not 0.0 < self.momentum < 1.0:
            raise ConfigError("momentum de batchnorm debe estar en (0, 1)", {"momentum": self.momentum})
        if np.any(np.asarray(self.running_var) < 0):
            raise ConfigError("running_var no puede ser negativa")
        if self.mode not in ("train", "infer"):
            raise ConfigError(f"Modo de batchnorm desconocido: {self.mode}")

    @classmethod
    def nuevo(cls, canales: int, dtype=np.float64, **kwargs) -> "BatchNormState":
        return cls(np.ones(canales, dtype=dtype), np.zeros(canales, dtype=dtype),
                   np.zeros(canales, dtype=dtype), np.ones(canales, dtype=dtype), **kwargs)


@dataclass
class BatchNormCache:
    x_hat: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray
    mode: str
    ejes: Tuple[int, ...] = field(default_factory=tuple)


def batchnorm(input, state: BatchNormState) -> Tuple[np.ndarray, BatchNormState, BatchNormCache]:
    """
    Normalización por canal sobre todos los ejes que no son de canal.

    En modo train usa las estadísticas del lote y devuelve un estado con las
    medias móviles actualizadas; en modo infer usa las estadísticas acumuladas.

    Args:
        input: Arreglo [C, ...]
        state (BatchNormState): Parámetros y estadísticas de la capa

    Returns:
        tuple: (salida, estado_actualizado, cache para el paso hacia atrás)
    """
    x = np.asarray(input)
    c = x.shape[0]
    if np.shape(state.gamma) != (c,):
        raise ConfigError("Número de canales de batchnorm incompatible en el eje 0",
                          {"eje": 0, "esperado": np.shape(state.gamma), "recibido": c})
    ejes = tuple(range(1, x.ndim))
    n = int(np.prod(x.shape[1:]))
    if n == 0:
        raise ConfigError("Canal de tamaño cero en batchnorm", {"forma": x.shape})
    forma = (c,) + (1,) * (x.ndim - 1)
    gamma = np.asarray(state.gamma)

    if state.mode == "train":
        media = x.mean(axis=ejes)
        var = x.var(axis=ejes)
        m = state.momentum
        var_insesgada = var * n / (n - 1) if n > 1 else var
        nuevo = replace(state,
                        running_mean=(1.0 - m) * state.running_mean + m * media,
                        running_var=(1.0 - m) * state.running_var + m * var_insesgada)
    else:
        media = np.asarray(state.running_mean)
        var = np.asarray(state.running_var)
        nuevo = state

    inv_std = 1.0 / np.sqrt(var + state.epsilon)
    x_hat = (x - media.reshape(forma)) * inv_std.reshape(forma)
    out = gamma.reshape(forma) * x_hat + np.asarray(state.beta).reshape(forma)
    return out, nuevo, BatchNormCache(x_hat, inv_std, gamma, state.mode, ejes)


def batchnorm_backward(grad_out, cache: BatchNormCache) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Gradientes de batchnorm respecto a la entrada, gamma y beta.

    Returns:
        tuple: (grad_input, grad_gamma, grad_beta)
    """
    g = np.asarray(grad_out)
    if g.shape != cache.x_hat.shape:
        raise InternoError("grad_out no coincide con la entrada de batchnorm",
                           {"forma_grad": g.shape, "forma_entrada": cache.x_hat.shape})
    ejes = cache.ejes
    forma = (g.shape[0],) + (1,) * (g.ndim - 1)
    grad_gamma = (g * cache.x_hat).sum(axis=ejes)
    grad_beta = g.sum(axis=ejes)
    escala = (cache.gamma * cache.inv_std).reshape(forma)
    if cache.mode == "infer":
        return g * escala, grad_gamma, grad_beta
    n = int(np.prod(g.shape[1:]))
    grad_input = (escala / n) * (n * g - grad_beta.reshape(forma) - cache.x_hat * grad_gamma.reshape(forma))
    return grad_input, grad_gamma, grad_beta


# ---------------------------------------------------------------------------
# Dropout, softmax de dos clases y ReLU
# ---------------------------------------------------------------------------

def dropout(input, p: float, mode: str, rng_seed: int = 0) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Dropout invertido: anula cada elemento con probabilidad p y escala los
    supervivientes por 1/(1−p). En modo infer (o con p=0) es la identidad.

    Args:
        input: Arreglo de entrada
        p (float): Probabilidad de anulación en [0, 1)
        mode (str): "train" o "infer"
        rng_seed (int): Semilla de la máscara

    Returns:
        tuple: (salida, máscara escalada o None si es la identidad)
    """
    if not 0.0 <= p < 1.0:
        raise ConfigError("La probabilidad de dropout debe estar en [0, 1)", {"p": p})
    x = np.asarray(input)
    if mode == "infer" or p == 0.0:
        return x, None
    rng = np.random.default_rng(rng_seed)
    conservar = rng.random(x.shape) >= p
    mascara = conservar.astype(x.dtype) * x.dtype.type(1.0 / (1.0 - p))
    return x * mascara, mascara


def dropout_backward(grad_out, mascara: Optional[np.ndarray]) -> np.ndarray:
    g = np.asarray(grad_out)
    if mascara is None:
        return g
    return g * mascara


def softmax2(input) -> np.ndarray:
    """
    Softmax por píxel de dos clases (fondo, hígado), estabilizado restando el máximo.

    Args:
        input: Logits [2, H, W]

    Returns:
        numpy.ndarray: Probabilidades [2, H, W]
    """
    x = np.asarray(input)
    if x.shape[0] != 2:
        raise ConfigError("softmax2 requiere exactamente 2 canales", {"forma": x.shape})
    e = np.exp(x - x.max(axis=0, keepdims=True))
    return e / e.sum(axis=0, keepdims=True)


def relu(input) -> np.ndarray:
    x = np.asarray(input)
    return np.maximum(x, 0.0)


def relu_backward(grad_out, saved_input) -> np.ndarray:
    return np.asarray(grad_out) * (np.asarray(saved_input) > 0)


def inicializar_kernel(rng: np.random.Generator, forma: Sequence[int], dtype=np.float64,
                       fan_in: Optional[int] = None) -> np.ndarray:
    """
    Inicialización normal escalada por fan-in (varianza 2/fan_in).

    Args:
        rng: Generador de números aleatorios
        forma: Forma [C_out, C_in, kernel...] o [C_in, C_out, kernel...]
        dtype: Tipo de elemento
        fan_in (int, optional): Entradas por salida; por defecto el producto
            de forma[1:], que solo vale para [C_out, C_in, kernel...]

    Returns:
        numpy.ndarray: Pesos inicializados
    """
    if fan_in is None:
        fan_in = int(np.prod(forma[1:]))
    if fan_in < 1:
        raise ConfigError("fan_in debe ser positivo", {"fan_in": fan_in, "forma": tuple(forma)})
    return (rng.standard_normal(tuple(forma)) * np.sqrt(2.0 / fan_in)).astype(dtype)
