#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Pruebas del núcleo tensorial: las rutas vectorizadas se comparan con
referencias de bucles anidados escritas aquí mismo.
"""

import numpy as np
import pytest
from helpers.error_handler import ConfigError, InternoError
from helpers.tensor_core import (
    Tensor, ConvSpec, BatchNormState, resolver_dtype,
    conv_forward, conv_backward, maxpool_spatial_forward, maxpool_spatial_backward,
    deconv2d_forward, deconv2d_backward, conv_stride2, batchnorm, batchnorm_backward,
    dropout, dropout_backward, softmax2, relu, relu_backward
)


# ---------------------------------------------------------------------------
# Referencias con bucles
# ---------------------------------------------------------------------------

def conv_lazos(x, w, b, stride, padding):
    xp = np.pad(x, [(0, 0)] + [(p, p) for p in padding])
    kernel = w.shape[2:]
    salida = tuple((n + 2 * p - k) // s + 1 for n, p, k, s in zip(x.shape[1:], padding, kernel, stride))
    out = np.zeros((w.shape[0],) + salida)
    for o in range(w.shape[0]):
        for pos in np.ndindex(*salida):
            total = b[o]
            for c in range(x.shape[0]):
                for off in np.ndindex(*kernel):
                    idx = tuple(p * s + k for p, s, k in zip(pos, stride, off))
                    total += w[(o, c) + off] * xp[(c,) + idx]
            out[(o,) + pos] = total
    return out


def grad_pesos_lazos(g, x, kernel, stride, padding):
    xp = np.pad(x, [(0, 0)] + [(p, p) for p in padding])
    gw = np.zeros((g.shape[0], x.shape[0]) + tuple(kernel))
    for o in range(g.shape[0]):
        for c in range(x.shape[0]):
            for off in np.ndindex(*kernel):
                for pos in np.ndindex(*g.shape[1:]):
                    idx = tuple(p * s + k for p, s, k in zip(pos, stride, off))
                    gw[(o, c) + off] += g[(o,) + pos] * xp[(c,) + idx]
    return gw


def maxpool_lazos(x):
    c, h, w, d = x.shape
    out = np.zeros((c, h // 2, w // 2, d))
    for ci, i, j, k in np.ndindex(c, h // 2, w // 2, d):
        out[ci, i, j, k] = max(x[ci, 2 * i + a, 2 * j + bb, k] for a in range(2) for bb in range(2))
    return out


def deconv_lazos(x, w, b):
    c_in, h, wd = x.shape
    c_out = w.shape[1]
    out = np.zeros((c_out, 2 * h, 2 * wd))
    for ci, i, j in np.ndindex(c_in, h, wd):
        for co, a, bb in np.ndindex(c_out, 4, 4):
            y, x_ = 2 * i + a - 1, 2 * j + bb - 1
            if 0 <= y < 2 * h and 0 <= x_ < 2 * wd:
                out[co, y, x_] += x[ci, i, j] * w[ci, co, a, bb]
    return out + b.reshape(-1, 1, 1)


def _spec_aleatoria(rng, ejes):
    kernel = tuple(int(k) for k in rng.integers(1, 4, ejes))
    stride = tuple(int(s) for s in rng.integers(1, 3, ejes))
    padding = tuple(int(p) for p in rng.integers(0, 2, ejes))
    return ConvSpec(kernel, stride, padding, int(rng.integers(1, 4)), int(rng.integers(1, 4)))


# ---------------------------------------------------------------------------
# Convolución
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("ejes", [2, 3])
def prueba_conv_forward_igual_a_bucles(ejes):
    rng = np.random.default_rng(100 + ejes)
    for _ in range(50):
        spec = _spec_aleatoria(rng, ejes)
        forma = (spec.in_channels,) + tuple(int(n) for n in rng.integers(3, 7 if ejes == 2 else 5, ejes))
        x = rng.standard_normal(forma)
        w = rng.standard_normal(spec.forma_pesos)
        b = rng.standard_normal(spec.out_channels)
        np.testing.assert_allclose(conv_forward(x, spec, w, b),
                                   conv_lazos(x, w, b, spec.stride, spec.padding), rtol=0, atol=1e-12)


@pytest.mark.parametrize("ejes", [2, 3])
def prueba_conv_backward_pesos_y_adjunto(ejes):
    rng = np.random.default_rng(200 + ejes)
    for _ in range(10):
        spec = _spec_aleatoria(rng, ejes)
        forma = (spec.in_channels,) + tuple(int(n) for n in rng.integers(3, 6, ejes))
        x = rng.standard_normal(forma)
        w = rng.standard_normal(spec.forma_pesos)
        b = np.zeros(spec.out_channels)
        y = conv_forward(x, spec, w, b)
        g = rng.standard_normal(y.shape)
        gx, gw, gb = conv_backward(g, x, spec, w)
        np.testing.assert_allclose(gw, grad_pesos_lazos(g, x, spec.kernel_shape, spec.stride, spec.padding),
                                   atol=1e-12)
        np.testing.assert_allclose(gb, g.reshape(g.shape[0], -1).sum(axis=1), atol=1e-12)
        # <A x, g> = <x, Aᵀ g>
        assert abs(np.sum(y * g) - np.sum(x * gx)) < 1e-10


def prueba_output_extents():
    spec = ConvSpec((3, 3, 3), (1, 1, 1), (1, 1, 0), 1, 4)
    assert spec.output_extents((16, 16, 9)) == (16, 16, 7)
    spec2 = ConvSpec((4, 4), (2, 2), (1, 1), 2, 2)
    assert spec2.output_extents((8, 6)) == (4, 3)
    with pytest.raises(ConfigError):
        ConvSpec((3, 3, 3), (1, 1, 1), (1, 1, 0), 1, 1).output_extents((4, 4, 2))


def prueba_conv_canales_incompatibles():
    spec = ConvSpec((3, 3), (1, 1), (1, 1), 2, 3)
    with pytest.raises(ConfigError) as info:
        conv_forward(np.zeros((3, 4, 4)), spec, np.zeros(spec.forma_pesos), np.zeros(3))
    assert info.value.detalles["eje"] == 0


def prueba_conv_backward_contexto_inconsistente():
    spec = ConvSpec((3, 3), (1, 1), (1, 1), 2, 3)
    with pytest.raises(InternoError):
        conv_backward(np.zeros((3, 4, 4)), np.zeros((2, 5, 5)), spec, np.zeros(spec.forma_pesos))


def prueba_conv_kernel_de_unos_suma_la_vecindad():
    spec = ConvSpec((3, 3), (1, 1), (1, 1), 1, 1)
    y = conv_forward(np.ones((1, 6, 7)), spec, np.ones(spec.forma_pesos), np.zeros(1))
    np.testing.assert_array_equal(y[0, 1:-1, 1:-1], 9.0)
    assert y[0, 0, 0] == 4.0 and y[0, 0, 3] == 6.0


def prueba_conv_backward_de_un_solo_pixel():
    rng = np.random.default_rng(7)
    spec = ConvSpec((3, 3), (1, 1), (1, 1), 2, 3)
    x = rng.standard_normal((2, 5, 6))
    w = rng.standard_normal(spec.forma_pesos)
    g = np.zeros((3, 5, 6))
    g[1, 2, 3] = 1.0
    gx, gw, gb = conv_backward(g, x, spec, w)

    # Pesos: el parche de entrada (con relleno) bajo ese pixel de salida
    xp = np.pad(x, [(0, 0), (1, 1), (1, 1)])
    np.testing.assert_array_equal(gw[1], xp[:, 2:5, 3:6])
    np.testing.assert_array_equal(gw[[0, 2]], 0.0)
    # Entrada: el kernel de ese canal colocado en el desplazamiento
    esperado = np.zeros_like(x)
    esperado[:, 1:4, 2:5] = w[1]
    np.testing.assert_array_equal(gx, esperado)
    np.testing.assert_array_equal(gb, [0.0, 1.0, 0.0])


def prueba_conv_backward_gradiente_nulo():
    rng = np.random.default_rng(8)
    spec = ConvSpec((3, 3, 3), (1, 1, 1), (1, 1, 0), 2, 2)
    x = rng.standard_normal((2, 4, 4, 5))
    w = rng.standard_normal(spec.forma_pesos)
    gx, gw, gb = conv_backward(np.zeros((2, 4, 4, 3)), x, spec, w)
    assert not gx.any() and not gw.any() and not gb.any()
    assert gx.shape == x.shape and gw.shape == w.shape


# ---------------------------------------------------------------------------
# Pooling
# ---------------------------------------------------------------------------

def prueba_maxpool_igual_a_bucles():
    rng = np.random.default_rng(3)
    for _ in range(50):
        forma = (int(rng.integers(1, 4)), 2 * int(rng.integers(1, 4)), 2 * int(rng.integers(1, 4)),
                 int(rng.integers(1, 4)))
        x = rng.standard_normal(forma)
        salida, _ = maxpool_spatial_forward(x)
        np.testing.assert_array_equal(salida, maxpool_lazos(x))


def prueba_maxpool_empate_toma_primera_posicion():
    x = np.ones((1, 2, 2, 1))
    _, indices = maxpool_spatial_forward(x)
    assert indices[0, 0, 0, 0] == 0
    g = maxpool_spatial_backward(np.full((1, 1, 1, 1), 5.0), indices, x.shape)
    assert g[0, 0, 0, 0] == 5.0 and g.sum() == 5.0


def prueba_maxpool_backward_enruta_al_maximo():
    x = np.zeros((1, 2, 2, 2))
    x[0, 1, 0, 0] = 3.0
    x[0, 0, 1, 1] = 4.0
    _, indices = maxpool_spatial_forward(x)
    g = maxpool_spatial_backward(np.array([[[[1.0, 2.0]]]]), indices, x.shape)
    assert g[0, 1, 0, 0] == 1.0 and g[0, 0, 1, 1] == 2.0
    assert g.sum() == 3.0


def prueba_maxpool_extension_impar():
    with pytest.raises(ConfigError):
        maxpool_spatial_forward(np.zeros((1, 3, 4, 1)))


# ---------------------------------------------------------------------------
# Deconvolución
# ---------------------------------------------------------------------------

def prueba_deconv_igual_a_dispersion():
    rng = np.random.default_rng(4)
    for _ in range(50):
        c_in, c_out = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        x = rng.standard_normal((c_in, int(rng.integers(1, 5)), int(rng.integers(1, 5))))
        w = rng.standard_normal((c_in, c_out, 4, 4))
        b = rng.standard_normal(c_out)
        np.testing.assert_allclose(deconv2d_forward(x, w, b), deconv_lazos(x, w, b), atol=1e-12)


def prueba_deconv_identidad_adjunta():
    rng = np.random.default_rng(5)
    for _ in range(20):
        c_in, c_out = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        h, w_ = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        x = rng.standard_normal((c_in, h, w_))
        y = rng.standard_normal((c_out, 2 * h, 2 * w_))
        w = rng.standard_normal((c_in, c_out, 4, 4))
        assert abs(np.sum(deconv2d_forward(x, w) * y) - np.sum(x * conv_stride2(y, w))) < 1e-10


def prueba_deconv_backward_pesos():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 3, 2))
    w = rng.standard_normal((2, 3, 4, 4))
    g = rng.standard_normal((3, 6, 4))
    _, gw, gb = deconv2d_backward(g, x, w)
    # Derivada exacta: la salida es lineal en w
    esperado = np.zeros_like(w)
    for idx in np.ndindex(*w.shape):
        e = np.zeros_like(w)
        e[idx] = 1.0
        esperado[idx] = np.sum(deconv_lazos(x, e, np.zeros(3)) * g)
    np.testing.assert_allclose(gw, esperado, atol=1e-12)
    np.testing.assert_allclose(gb, g.sum(axis=(1, 2)), atol=1e-12)


def prueba_deconv_rechaza_otra_geometria():
    with pytest.raises(ConfigError):
        deconv2d_forward(np.zeros((1, 2, 2)), np.zeros((1, 1, 3, 3)), kernel=3)


# ---------------------------------------------------------------------------
# Batchnorm, dropout, softmax, relu
# ---------------------------------------------------------------------------

def prueba_batchnorm_entrenamiento_normaliza_y_actualiza():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((3, 6, 5)) * 4.0 + 2.0
    estado = BatchNormState.nuevo(3)
    out, nuevo, _ = batchnorm(x, estado)
    np.testing.assert_allclose(out.mean(axis=(1, 2)), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=(1, 2)), x.var(axis=(1, 2)) / (x.var(axis=(1, 2)) + 1e-5), rtol=1e-10)
    n = 30
    np.testing.assert_allclose(nuevo.running_mean, 0.1 * x.mean(axis=(1, 2)), rtol=1e-12)
    np.testing.assert_allclose(nuevo.running_var, 0.9 + 0.1 * x.var(axis=(1, 2)) * n / (n - 1), rtol=1e-12)
    # Estado original intacto
    np.testing.assert_array_equal(estado.running_mean, np.zeros(3))


def prueba_batchnorm_inferencia_usa_estadisticas_acumuladas():
    x = np.arange(8, dtype=np.float64).reshape(2, 2, 2)
    estado = BatchNormState(np.array([2.0, 1.0]), np.array([0.5, 0.0]), np.array([1.0, -1.0]),
                            np.array([4.0, 1.0]), mode="infer", epsilon=1e-12)
    out, nuevo, cache = batchnorm(x, estado)
    np.testing.assert_allclose(out[0], 2.0 * (x[0] - 1.0) / 2.0 + 0.5, rtol=1e-9)
    np.testing.assert_allclose(out[1], x[1] + 1.0, rtol=1e-9)
    assert nuevo is estado
    gx, _, _ = batchnorm_backward(np.ones_like(x), cache)
    np.testing.assert_allclose(gx[0], np.full((2, 2), 1.0), rtol=1e-9)


def prueba_batchnorm_estado_invalido():
    with pytest.raises(ConfigError):
        BatchNormState.nuevo(2, epsilon=0.0)
    with pytest.raises(ConfigError):
        BatchNormState.nuevo(2, momentum=1.0)
    with pytest.raises(ConfigError):
        batchnorm(np.zeros((3, 2, 2)), BatchNormState.nuevo(2))


def prueba_dropout():
    x = np.ones((4, 8, 8))
    out, mascara = dropout(x, 0.5, "infer", 1)
    assert out is x and mascara is None
    out, mascara = dropout(x, 0.0, "train", 1)
    assert mascara is None
    out1, m1 = dropout(x, 0.5, "train", 11)
    out2, _ = dropout(x, 0.5, "train", 11)
    np.testing.assert_array_equal(out1, out2)
    assert set(np.unique(out1)) <= {0.0, 2.0}
    np.testing.assert_array_equal(dropout_backward(np.ones_like(x), m1), m1)
    with pytest.raises(ConfigError):
        dropout(x, 1.0, "train", 0)

    _, grande = dropout(np.ones(10 ** 6), 0.5, "train", 3)
    assert 0.497 <= (grande > 0).mean() <= 0.503


def prueba_softmax2_estable():
    logits = np.array([[[1000.0, -3.0]], [[999.0, 4.0]]])
    p = softmax2(logits)
    assert np.all(np.isfinite(p))
    np.testing.assert_allclose(p.sum(axis=0), 1.0, atol=1e-15)
    np.testing.assert_allclose(p[0, 0, 0], 1.0 / (1.0 + np.exp(-1.0)), rtol=1e-12)
    with pytest.raises(ConfigError):
        softmax2(np.zeros((3, 2, 2)))


def prueba_relu():
    x = np.array([-1.0, 0.0, 2.0])
    np.testing.assert_array_equal(relu(x), [0.0, 0.0, 2.0])
    np.testing.assert_array_equal(relu_backward(np.ones(3), x), [0.0, 0.0, 1.0])


def prueba_tensor():
    t = Tensor(np.arange(6.0), requires_grad=True)
    r = t.reshape(2, 3)
    assert r.shape == (2, 3) and r.dtype == np.float64
    with pytest.raises(ConfigError):
        t.reshape(4, 2)
    t.zero_grad()
    t.acumular_grad(np.ones(6))
    t.acumular_grad(np.ones(6))
    np.testing.assert_array_equal(t.grad, np.full(6, 2.0))
    with pytest.raises(InternoError):
        t.acumular_grad(np.ones(5))
    z = Tensor.zeros((2, 2), "float32", requires_grad=True)
    assert z.dtype == np.float32 and z.grad.shape == (2, 2)


def prueba_resolver_dtype():
    assert resolver_dtype("float32") == np.float32
    with pytest.raises(ConfigError):
        resolver_dtype("float16")
