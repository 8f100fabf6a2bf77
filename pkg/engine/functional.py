"""Operadores diferenciables que necesita la UNet de LED.

Todos los operadores trabajan en NCHW, son funciones deterministas de sus
entradas y conservan el dtype (float32 o float64) de sus argumentos.
"""
from __future__ import annotations

from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from engine.tensor import Tensor
from exceptions.base import ShapeException, ValidationException

DEFAULT_LEAKY_SLOPE = 0.2


def _check_dtypes(*tensors: Optional[Tensor]) -> np.dtype:
    dtypes = {t.dtype for t in tensors if t is not None}
    if len(dtypes) != 1:
        raise ValidationException(f"Los operandos mezclan precisiones: {sorted(str(d) for d in dtypes)}")
    return dtypes.pop()


def _check_rank(tensor: Tensor, rank: int, label: str) -> None:
    if tensor.ndim != rank:
        raise ShapeException(f"{label} debe tener rango {rank}, recibido {tensor.shape}")


def _channel_view(vector: np.ndarray, ndim: int) -> np.ndarray:
    return vector.reshape((1, -1) + (1,) * (ndim - 2))


def _pad_ring(x: np.ndarray, pad_values: Optional[np.ndarray]) -> np.ndarray:
    n, c, h, w = x.shape
    padded = np.empty((n, c, h + 2, w + 2), dtype=x.dtype)
    if pad_values is None:
        padded[...] = 0
    else:
        padded[...] = pad_values.reshape(1, c, 1, 1)
    padded[:, :, 1:h + 1, 1:w + 1] = x
    return padded


def _ring_sum(padded_grad: np.ndarray) -> np.ndarray:
    top = padded_grad[:, :, 0, :].sum(axis=(0, 2))
    bottom = padded_grad[:, :, -1, :].sum(axis=(0, 2))
    left = padded_grad[:, :, 1:-1, 0].sum(axis=(0, 2))
    right = padded_grad[:, :, 1:-1, -1].sum(axis=(0, 2))
    return top + bottom + left + right


# ----------------------------------------------------------------------
#   CONVOLUCIONES
# ----------------------------------------------------------------------
def conv3x3(input: Tensor, weight: Tensor, bias: Tensor, pad_values: Optional[Tensor] = None) -> Tensor:
    """Convolución 3×3 same-size con anillo de padding configurable por canal"""
    _check_rank(input, 4, "input")
    _check_rank(weight, 4, "weight")
    dtype = _check_dtypes(input, weight, bias, pad_values)
    n, c, h, w = input.shape
    c_out, c_in, kh, kw = weight.shape
    if (kh, kw) != (3, 3):
        raise ShapeException(f"conv3x3 requiere kernel 3×3, recibido {kh}×{kw}")
    if c_in != c:
        raise ShapeException(f"Canales de entrada {c} no coinciden con Cin={c_in} del kernel")
    if bias.shape != (c_out,):
        raise ShapeException(f"bias debe tener forma ({c_out},), recibido {bias.shape}")
    if pad_values is not None and pad_values.shape != (c,):
        raise ShapeException(f"pad_values debe tener forma ({c},), recibido {pad_values.shape}")

    padded = _pad_ring(input.data, None if pad_values is None else pad_values.data)
    windows = sliding_window_view(padded, (3, 3), axis=(2, 3))
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(n * h * w, c * 9)
    w_mat = weight.data.reshape(c_out, c * 9)
    out = (cols @ w_mat.T).reshape(n, h, w, c_out).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out + bias.data.reshape(1, c_out, 1, 1), dtype=dtype)

    def backward_fn(grad: np.ndarray):
        g_mat = np.ascontiguousarray(grad.transpose(0, 2, 3, 1)).reshape(n * h * w, c_out)
        d_weight = (g_mat.T @ cols).reshape(weight.shape)
        d_bias = grad.sum(axis=(0, 2, 3))
        d_cols = (g_mat @ w_mat).reshape(n, h, w, c, 3, 3)
        d_padded = np.zeros((n, c, h + 2, w + 2), dtype=dtype)
        for u in range(3):
            for v in range(3):
                d_padded[:, :, u:u + h, v:v + w] += d_cols[..., u, v].transpose(0, 3, 1, 2)
        d_input = np.ascontiguousarray(d_padded[:, :, 1:h + 1, 1:w + 1])
        d_pad = _ring_sum(d_padded) if pad_values is not None else None
        return d_input, d_weight, d_bias, d_pad

    parents = (input, weight, bias) + ((pad_values,) if pad_values is not None else ())
    return Tensor._from_op(out, parents, _trim(backward_fn, len(parents)), "conv3x3")


def conv1x1(input: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Convolución puntual (cabeza de salida de la red)"""
    _check_rank(input, 4, "input")
    _check_rank(weight, 4, "weight")
    dtype = _check_dtypes(input, weight, bias)
    n, c, h, w = input.shape
    c_out, c_in, kh, kw = weight.shape
    if (kh, kw) != (1, 1) or c_in != c:
        raise ShapeException(f"conv1x1 incompatible: input {input.shape}, weight {weight.shape}")
    x_mat = np.ascontiguousarray(input.data.transpose(0, 2, 3, 1)).reshape(n * h * w, c)
    w_mat = weight.data.reshape(c_out, c)
    out = (x_mat @ w_mat.T).reshape(n, h, w, c_out).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out + bias.data.reshape(1, c_out, 1, 1), dtype=dtype)

    def backward_fn(grad: np.ndarray):
        g_mat = np.ascontiguousarray(grad.transpose(0, 2, 3, 1)).reshape(n * h * w, c_out)
        d_input = (g_mat @ w_mat).reshape(n, h, w, c).transpose(0, 3, 1, 2)
        d_weight = (g_mat.T @ x_mat).reshape(weight.shape)
        return np.ascontiguousarray(d_input), d_weight, grad.sum(axis=(0, 2, 3))

    return Tensor._from_op(out, (input, weight, bias), backward_fn, "conv1x1")


def transposed_conv2(input: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Convolución transpuesta kernel 2, stride 2: cada píxel esparce un parche 2×2"""
    _check_rank(input, 4, "input")
    _check_rank(weight, 4, "weight")
    dtype = _check_dtypes(input, weight, bias)
    n, c, h, w = input.shape
    c_in, c_out, kh, kw = weight.shape
    if (kh, kw) != (2, 2):
        raise ShapeException(f"transposed_conv2 requiere kernel 2×2, recibido {kh}×{kw}")
    if c_in != c:
        raise ShapeException(f"Canales de entrada {c} no coinciden con Cin={c_in} del kernel")
    if bias.shape != (c_out,):
        raise ShapeException(f"bias debe tener forma ({c_out},), recibido {bias.shape}")

    x_mat = np.ascontiguousarray(input.data.transpose(0, 2, 3, 1)).reshape(n * h * w, c)
    w_mat = weight.data.reshape(c, c_out * 4)
    patches = (x_mat @ w_mat).reshape(n, h, w, c_out, 2, 2)
    out = patches.transpose(0, 3, 1, 4, 2, 5).reshape(n, c_out, 2 * h, 2 * w)
    out = np.ascontiguousarray(out + bias.data.reshape(1, c_out, 1, 1), dtype=dtype)

    def backward_fn(grad: np.ndarray):
        g = grad.reshape(n, c_out, h, 2, w, 2).transpose(0, 2, 4, 1, 3, 5)
        g_mat = np.ascontiguousarray(g).reshape(n * h * w, c_out * 4)
        d_input = (g_mat @ w_mat.T).reshape(n, h, w, c).transpose(0, 3, 1, 2)
        d_weight = (x_mat.T @ g_mat).reshape(weight.shape)
        return np.ascontiguousarray(d_input), d_weight, grad.sum(axis=(0, 2, 3))

    return Tensor._from_op(out, (input, weight, bias), backward_fn, "transposed_conv2")


# ----------------------------------------------------------------------
#   OPERACIONES POR CANAL
# ----------------------------------------------------------------------
def channel_affine(input: Tensor, scale: Tensor, shift: Tensor) -> Tensor:
    """out[n,c,...] = scale[c]·input[n,c,...] + shift[c]"""
    if input.ndim < 2:
        raise ShapeException(f"channel_affine requiere eje de canales, recibido {input.shape}")
    dtype = _check_dtypes(input, scale, shift)
    c = input.shape[1]
    if scale.shape != (c,) or shift.shape != (c,):
        raise ShapeException(
            f"scale/shift deben tener longitud {c}, recibido {scale.shape} y {shift.shape}"
        )
    s = _channel_view(scale.data, input.ndim)
    t = _channel_view(shift.data, input.ndim)
    out = np.asarray(input.data * s + t, dtype=dtype)
    reduce_axes = (0,) + tuple(range(2, input.ndim))

    def backward_fn(grad: np.ndarray):
        return grad * s, (grad * input.data).sum(axis=reduce_axes), grad.sum(axis=reduce_axes)

    return Tensor._from_op(out, (input, scale, shift), backward_fn, "channel_affine")


def scale_in_channels(weight: Tensor, scale: Tensor) -> Tensor:
    """W[o,i,u,v]·scale[i]: absorbe la escala CSA dentro del kernel"""
    _check_rank(weight, 4, "weight")
    _check_dtypes(weight, scale)
    if scale.shape != (weight.shape[1],):
        raise ShapeException(f"scale debe tener longitud {weight.shape[1]}, recibido {scale.shape}")
    s = scale.data.reshape(1, -1, 1, 1)
    out = weight.data * s

    def backward_fn(grad: np.ndarray):
        return grad * s, (grad * weight.data).sum(axis=(0, 2, 3))

    return Tensor._from_op(out, (weight, scale), backward_fn, "scale_in_channels")


def kernel_shift_sum(weight: Tensor, shift: Tensor) -> Tensor:
    """Σ_{i,u,v} W[o,i,u,v]·shift[i]: contribución del desplazamiento CSA al bias"""
    _check_rank(weight, 4, "weight")
    _check_dtypes(weight, shift)
    if shift.shape != (weight.shape[1],):
        raise ShapeException(f"shift debe tener longitud {weight.shape[1]}, recibido {shift.shape}")
    t = shift.data.reshape(1, -1, 1, 1)
    out = (weight.data * t).sum(axis=(1, 2, 3))

    def backward_fn(grad: np.ndarray):
        g = grad.reshape(-1, 1, 1, 1)
        return g * t, (g * weight.data).sum(axis=(0, 2, 3))

    return Tensor._from_op(out, (weight, shift), backward_fn, "kernel_shift_sum")


# ----------------------------------------------------------------------
#   NO LINEALIDADES Y REMUESTREO
# ----------------------------------------------------------------------
def leaky_relu(input: Tensor, slope: float = DEFAULT_LEAKY_SLOPE) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise ValidationException(f"La pendiente de leaky-ReLU debe estar en (0,1), recibido {slope}")
    x = input.data
    positive = x > 0
    out = np.where(x >= 0, x, x * input.dtype.type(slope))

    def backward_fn(grad: np.ndarray):
        return (np.where(positive, grad, grad * input.dtype.type(slope)),)

    return Tensor._from_op(out, (input,), backward_fn, "leaky_relu")


def maxpool2(input: Tensor) -> Tensor:
    """Max-pooling 2×2 sin solape; empates al primero en orden fila-mayor"""
    _check_rank(input, 4, "input")
    n, c, h, w = input.shape
    if h % 2 or w % 2:
        raise ShapeException(f"maxpool2 requiere H y W pares, recibido {h}×{w}")
    blocks = input.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(n, c, h // 2, w // 2, 4)
    argmax = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, argmax[..., None], axis=-1)[..., 0]

    def backward_fn(grad: np.ndarray):
        scattered = np.zeros((n, c, h // 2, w // 2, 4), dtype=grad.dtype)
        np.put_along_axis(scattered, argmax[..., None], grad[..., None], axis=-1)
        d_input = scattered.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return (np.ascontiguousarray(d_input).reshape(n, c, h, w),)

    return Tensor._from_op(np.ascontiguousarray(out), (input,), backward_fn, "maxpool2")


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    _check_rank(a, 4, "a")
    _check_rank(b, 4, "b")
    _check_dtypes(a, b)
    if (a.shape[0], a.shape[2], a.shape[3]) != (b.shape[0], b.shape[2], b.shape[3]):
        raise ShapeException(f"concat_channels con N/H/W distintos: {a.shape} vs {b.shape}")
    split = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)

    def backward_fn(grad: np.ndarray):
        return np.ascontiguousarray(grad[:, :split]), np.ascontiguousarray(grad[:, split:])

    return Tensor._from_op(out, (a, b), backward_fn, "concat_channels")


def slice_channels(input: Tensor, start: int, stop: int) -> Tensor:
    _check_rank(input, 4, "input")
    c = input.shape[1]
    if not 0 <= start < stop <= c:
        raise ShapeException(f"Rango de canales [{start},{stop}) fuera de [0,{c})")
    out = np.ascontiguousarray(input.data[:, start:stop])

    def backward_fn(grad: np.ndarray):
        full = np.zeros_like(input.data)
        full[:, start:stop] = grad
        return (full,)

    return Tensor._from_op(out, (input,), backward_fn, "slice_channels")


# ----------------------------------------------------------------------
#   ARITMÉTICA Y PÉRDIDAS
# ----------------------------------------------------------------------
def add(a: Tensor, b: Tensor) -> Tensor:
    _check_dtypes(a, b)
    if a.shape != b.shape:
        raise ShapeException(f"add requiere formas iguales: {a.shape} vs {b.shape}")

    def backward_fn(grad: np.ndarray):
        return grad, grad

    return Tensor._from_op(a.data + b.data, (a, b), backward_fn, "add")


def sum_all(input: Tensor) -> Tensor:
    out = np.asarray(input.data.sum(), dtype=input.dtype).reshape(1)

    def backward_fn(grad: np.ndarray):
        return (np.full_like(input.data, grad[0]),)

    return Tensor._from_op(out, (input,), backward_fn, "sum_all")


def mean(input: Tensor) -> Tensor:
    count = input.size
    out = np.asarray(input.data.mean(), dtype=input.dtype).reshape(1)

    def backward_fn(grad: np.ndarray):
        return (np.full_like(input.data, input.dtype.type(grad[0] / count)),)

    return Tensor._from_op(out, (input,), backward_fn, "mean")


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Media de |pred − target|; gradiente sign(pred − target)/count"""
    _check_dtypes(pred, target)
    if pred.shape != target.shape:
        raise ShapeException(f"l1_loss con formas distintas: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    count = diff.size
    out = np.asarray(np.abs(diff).mean(), dtype=pred.dtype).reshape(1)

    def backward_fn(grad: np.ndarray):
        g = np.sign(diff) * pred.dtype.type(grad[0] / count)
        return g, -g

    return Tensor._from_op(out, (pred, target), backward_fn, "l1_loss")


def _trim(backward_fn, n_parents: int):
    """Recorta la tupla de gradientes al número real de padres"""
    def wrapped(grad: np.ndarray):
        return backward_fn(grad)[:n_parents]
    return wrapped
