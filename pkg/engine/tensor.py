"""Tensor denso con cinta de gradientes dinámica.

Cada operación diferenciable registra un nodo (padres + closure de backward)
mientras el modo gradiente está activo. ``backward`` recorre el grafo en orden
topológico inverso y acumula ``.grad`` en las hojas con ``requires_grad``.
Tras un backward el grafo queda consumido salvo que se pida ``retain_graph``.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, Optional, Sequence, Tuple

import numpy as np

from exceptions.base import GraphException, ShapeException, ValidationException

SUPPORTED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
PRECISION_DTYPES = {"single": np.dtype(np.float32), "double": np.dtype(np.float64)}

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_grad_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Desactiva la grabación de la cinta en el hilo actual"""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


class _Node:
    __slots__ = ("parents", "backward_fn", "op")

    def __init__(self, parents: Tuple["Tensor", ...], backward_fn: BackwardFn, op: str):
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op


class Tensor:
    """Arreglo NCHW (o de cualquier rango >= 1) que participa en la cinta"""

    __slots__ = ("data", "grad", "requires_grad", "name", "_node", "_consumed")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: Optional[str] = None):
        array = np.array(data, dtype=dtype if dtype is not None else None, copy=True)
        if array.dtype not in SUPPORTED_DTYPES:
            array = array.astype(np.float32 if dtype is None else dtype)
        if array.ndim == 0:
            array = array.reshape(1)
        if any(extent < 1 for extent in array.shape):
            raise ShapeException(f"Todas las dimensiones deben ser >= 1, recibido {array.shape}")
        self.data: np.ndarray = array
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._node: Optional[_Node] = None
        self._consumed = False

    # ------------------------------------------------------------------
    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], backward_fn: BackwardFn, op: str) -> "Tensor":
        out = cls.__new__(cls)
        if data.ndim == 0:
            data = data.reshape(1)
        out.data = data
        out.grad = None
        out.name = None
        out._consumed = False
        track = is_grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._node = _Node(tuple(parents), backward_fn, op) if track else None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dims(self) -> list[int]:
        return list(self.data.shape)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeException(f"item() requiere un único elemento, hay {self.data.size}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    # ------------------------------------------------------------------
    def backward(self, retain_graph: bool = False) -> Dict["Tensor", np.ndarray]:
        """Propaga gradientes desde esta pérdida escalar.

        Devuelve el mapa hoja -> gradiente y además acumula ``.grad`` en cada
        hoja con ``requires_grad``. Sin ``retain_graph`` el grafo se libera.
        """
        if self.data.size != 1:
            raise ShapeException(f"backward requiere una pérdida de un elemento, hay {self.data.size}")
        if self._consumed:
            raise GraphException("El grafo de este tensor ya fue consumido por un backward previo")
        if self._node is None:
            raise GraphException()

        order = _topological_order(self)
        grads: Dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        leaves: Dict["Tensor", np.ndarray] = {}

        for node_tensor in reversed(order):
            grad = grads.pop(id(node_tensor), None)
            if grad is None:
                continue
            node = node_tensor._node
            if node is None:
                if node_tensor.requires_grad:
                    leaves[node_tensor] = grad
                continue
            parent_grads = node.backward_fn(grad)
            for parent, parent_grad in zip(node.parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if parent_grad.shape != parent.data.shape:
                    raise ShapeException(
                        f"Gradiente de '{node.op}' con forma {parent_grad.shape}, se esperaba {parent.data.shape}"
                    )
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + parent_grad
                else:
                    grads[key] = parent_grad

        for leaf, grad in leaves.items():
            grad = grad.astype(leaf.data.dtype, copy=False)
            leaf.grad = grad.copy() if leaf.grad is None else leaf.grad + grad

        if not retain_graph:
            for node_tensor in order:
                if node_tensor._node is not None:
                    node_tensor._node = None
                    node_tensor._consumed = True
        return leaves


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node._node is not None:
            for parent in node._node.parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
    return order


def backward(loss: Tensor, retain_graph: bool = False) -> Dict[Tensor, np.ndarray]:
    return loss.backward(retain_graph=retain_graph)


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        if dtype is not None and value.dtype != np.dtype(dtype):
            raise ValidationException(f"Se esperaba dtype {np.dtype(dtype)}, recibido {value.dtype}")
        return value
    return Tensor(value, dtype=dtype)


def parameter(data, dtype=None, name: Optional[str] = None) -> Tensor:
    """Hoja entrenable"""
    return Tensor(data, requires_grad=True, dtype=dtype, name=name)


def resolve_dtype(precision: str) -> np.dtype:
    try:
        return PRECISION_DTYPES[precision]
    except KeyError:
        raise ValidationException(f"Precisión desconocida '{precision}' (single|double)")
