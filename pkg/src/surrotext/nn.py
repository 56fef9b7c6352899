"""Trainable layers assembled from autodiff operations.

Parameters live in flat ``dict[str, Tensor]`` registries so the optimizer,
checkpoint writer and finite-difference checks can treat every model the
same way.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Linear:
    def __init__(self, rng: np.random.Generator, in_dim: int, out_dim: int,
                 name: str, zero_init: bool = False):
        w = np.zeros((in_dim, out_dim)) if zero_init else glorot(rng, in_dim, out_dim)
        self.w = ad.parameter(w, name=f"{name}.w")
        self.b = ad.parameter(np.zeros(out_dim), name=f"{name}.b")
        self.name = name

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.w), self.b)

    def params(self) -> dict[str, Tensor]:
        return {self.w.name: self.w, self.b.name: self.b}


class LSTMCell:
    """Fused-gate LSTM cell: one matmul per step computes i, f, g, o.

    Forget-gate bias starts at 1.0 so early training does not wash out
    long-range state.
    """

    def __init__(self, rng: np.random.Generator, in_dim: int, hidden: int, name: str):
        self.hidden = hidden
        self.w = ad.parameter(glorot(rng, in_dim + hidden, 4 * hidden), name=f"{name}.w")
        bias = np.zeros(4 * hidden)
        bias[hidden:2 * hidden] = 1.0
        self.b = ad.parameter(bias, name=f"{name}.b")
        self.name = name

    def step(self, x: Tensor, h: Tensor, c: Tensor,
             mask: Optional[Tensor] = None) -> tuple[Tensor, Tensor]:
        z = ad.concat([x, h], axis=1)
        gates = ad.add(ad.matmul(z, self.w), self.b)
        hid = self.hidden
        i = ad.sigmoid(ad.slice_cols(gates, 0, hid))
        f = ad.sigmoid(ad.slice_cols(gates, hid, 2 * hid))
        g = ad.tanh(ad.slice_cols(gates, 2 * hid, 3 * hid))
        o = ad.sigmoid(ad.slice_cols(gates, 3 * hid, 4 * hid))
        c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
        h_new = ad.mul(o, ad.tanh(c_new))
        if mask is not None:
            # freeze state on padded steps: m*new + (1-m)*old
            keep = ad.sub(_ones_like(mask), mask)
            c_new = ad.add(ad.mul(mask, c_new), ad.mul(keep, c))
            h_new = ad.add(ad.mul(mask, h_new), ad.mul(keep, h))
        return h_new, c_new

    def params(self) -> dict[str, Tensor]:
        return {self.w.name: self.w, self.b.name: self.b}


def _ones_like(t: Tensor) -> Tensor:
    return ad.tensor(np.ones_like(t.data))


def _zero_state(batch: int, hidden: int) -> tuple[Tensor, Tensor]:
    return ad.tensor(np.zeros((batch, hidden))), ad.tensor(np.zeros((batch, hidden)))


class BiLSTM:
    """Bidirectional LSTM over a list of per-step (batch, features) tensors."""

    def __init__(self, rng: np.random.Generator, in_dim: int, hidden: int, name: str):
        self.hidden = hidden
        self.fw = LSTMCell(rng, in_dim, hidden, f"{name}.fw")
        self.bw = LSTMCell(rng, in_dim, hidden, f"{name}.bw")

    def run(self, steps: Sequence[Tensor],
            masks: Optional[Sequence[Tensor]] = None) -> list[Tensor]:
        """Per-step concatenation of forward and backward hidden states."""
        fw_states = self._direction(self.fw, steps, masks)
        bw_states = self._direction(self.bw, list(reversed(steps)),
                                    list(reversed(masks)) if masks else None)
        bw_states.reverse()
        return [ad.concat([f, b], axis=1) for f, b in zip(fw_states, bw_states)]

    def finals(self, steps: Sequence[Tensor],
               masks: Optional[Sequence[Tensor]] = None) -> Tensor:
        """Concatenated final states: forward at the last unmasked step,
        backward at the first step."""
        fw_states = self._direction(self.fw, steps, masks)
        bw_states = self._direction(self.bw, list(reversed(steps)),
                                    list(reversed(masks)) if masks else None)
        return ad.concat([fw_states[-1], bw_states[-1]], axis=1)

    @staticmethod
    def _direction(cell: LSTMCell, steps: Sequence[Tensor],
                   masks: Optional[Sequence[Tensor]]) -> list[Tensor]:
        batch = steps[0].shape[0]
        h, c = _zero_state(batch, cell.hidden)
        out = []
        for t, x in enumerate(steps):
            h, c = cell.step(x, h, c, mask=masks[t] if masks else None)
            out.append(h)
        return out

    def params(self) -> dict[str, Tensor]:
        return {**self.fw.params(), **self.bw.params()}


class ResNetMLP:
    """Residual MLP applied independently per timestep.

    Residual-branch output layers are zero-initialized, so a fresh network
    computes the plain input projection.
    """

    def __init__(self, rng: np.random.Generator, in_dim: int, width: int,
                 blocks: int, name: str):
        self.proj = Linear(rng, in_dim, width, f"{name}.proj")
        self.blocks = []
        for i in range(blocks):
            first = Linear(rng, width, width, f"{name}.block{i}.fc1")
            second = Linear(rng, width, width, f"{name}.block{i}.fc2", zero_init=True)
            self.blocks.append((first, second))

    def __call__(self, x: Tensor) -> Tensor:
        u = self.proj(x)
        for first, second in self.blocks:
            u = ad.add(u, second(ad.relu(first(u))))
        return u

    def params(self) -> dict[str, Tensor]:
        out = self.proj.params()
        for first, second in self.blocks:
            out.update(first.params())
            out.update(second.params())
        return out


class MLPHead:
    """Single-hidden-layer MLP shared across timesteps."""

    def __init__(self, rng: np.random.Generator, in_dim: int, hidden: int,
                 out_dim: int, name: str):
        self.fc1 = Linear(rng, in_dim, hidden, f"{name}.fc1")
        self.fc2 = Linear(rng, hidden, out_dim, f"{name}.fc2")

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(ad.relu(self.fc1(x)))

    def params(self) -> dict[str, Tensor]:
        return {**self.fc1.params(), **self.fc2.params()}


def global_grad_norm(params: dict[str, Tensor]) -> float:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    return float(np.sqrt(total))


def clip_gradients(params: dict[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their global norm is at most ``max_norm``."""
    norm = global_grad_norm(params)
    if norm > max_norm > 0:
        factor = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= factor
    return norm
