"""Layers built from the tape primitives: Linear, LSTM cell, ELU MLP."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from wmr.errors import ShapeError
from wmr.services.autodiff.tensor import (
    Tensor,
    add,
    elu,
    matmul,
    mul,
    sigmoid,
    slice_cols,
    tanh,
)


class Module:
    """Named parameter container; children are walked in registration order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._children: dict[str, Module] = {}

    def param(self, name: str, data: np.ndarray) -> Tensor:
        t = Tensor(data, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield f"{prefix}{name}", p
        for name, m in self._children.items():
            yield from m.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        super().__init__()
        limit = 1.0 / math.sqrt(in_dim)
        self.in_dim, self.out_dim = in_dim, out_dim
        self.weight = self.param("weight", rng.uniform(-limit, limit, (in_dim, out_dim)))
        self.bias = self.param("bias", np.zeros(out_dim))

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.weight), self.bias)


@dataclass(frozen=True)
class LstmState:
    hidden: Tensor
    cell: Tensor

    def __post_init__(self):
        if self.hidden.shape != self.cell.shape:
            raise ShapeError(
                f"lstm state: hidden {self.hidden.shape} and cell {self.cell.shape} differ"
            )

    @classmethod
    def zeros(cls, batch: int, hidden: int) -> "LstmState":
        return cls(Tensor(np.zeros((batch, hidden))), Tensor(np.zeros((batch, hidden))))

    def masked(self, keep: np.ndarray) -> "LstmState":
        """Zero the rows where keep is 0 (episode starts); keep is shape [batch]."""
        mask = np.repeat(keep.reshape(-1, 1), self.hidden.shape[1], axis=1)
        return LstmState(mul(self.hidden, mask), mul(self.cell, mask))

    def numpy(self) -> tuple[np.ndarray, np.ndarray]:
        return self.hidden.data.copy(), self.cell.data.copy()


@dataclass
class LstmWeights:
    w_ih: Tensor  # [I, 4H], gate order i, f, g, o
    w_hh: Tensor  # [H, 4H]
    bias: Tensor  # [4H]


def lstm_cell(x: Tensor, state: LstmState, weights: LstmWeights) -> tuple[Tensor, LstmState]:
    hidden = state.hidden.shape[1]
    if weights.w_ih.shape != (x.shape[1], 4 * hidden) or weights.w_hh.shape != (hidden, 4 * hidden):
        raise ShapeError(
            f"lstm_cell: input {x.shape} / hidden {hidden} do not fit "
            f"w_ih {weights.w_ih.shape}, w_hh {weights.w_hh.shape}"
        )
    gates = add(add(matmul(x, weights.w_ih), matmul(state.hidden, weights.w_hh)), weights.bias)
    i = sigmoid(slice_cols(gates, 0, hidden))
    f = sigmoid(slice_cols(gates, hidden, 2 * hidden))
    g = tanh(slice_cols(gates, 2 * hidden, 3 * hidden))
    o = sigmoid(slice_cols(gates, 3 * hidden, 4 * hidden))
    cell = add(mul(f, state.cell), mul(i, g))
    h = mul(o, tanh(cell))
    return h, LstmState(h, cell)


class LSTM(Module):
    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        limit = 1.0 / math.sqrt(hidden)
        self.in_dim, self.hidden = in_dim, hidden
        self.w_ih = self.param("w_ih", rng.uniform(-limit, limit, (in_dim, 4 * hidden)))
        self.w_hh = self.param("w_hh", rng.uniform(-limit, limit, (hidden, 4 * hidden)))
        self.bias = self.param("bias", np.zeros(4 * hidden))

    @property
    def weights(self) -> LstmWeights:
        return LstmWeights(self.w_ih, self.w_hh, self.bias)

    def initial_state(self, batch: int) -> LstmState:
        return LstmState.zeros(batch, self.hidden)

    def __call__(self, x: Tensor, state: LstmState) -> tuple[Tensor, LstmState]:
        return lstm_cell(x, state, self.weights)


class EluMLP(Module):
    """ELU -> Linear repeated, as the decoder and head stacks are laid out."""

    def __init__(self, dims: list[int], rng: np.random.Generator):
        super().__init__()
        self.layers = [
            self.child(f"layers.{k}", Linear(dims[k], dims[k + 1], rng))
            for k in range(len(dims) - 1)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(elu(x))
        return x
