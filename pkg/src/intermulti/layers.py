"""Parameter containers shared by the model components."""

from __future__ import annotations

import numpy as np

from . import tensor as T


class Module:
    """Anything that owns named parameters or sub-modules."""

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, T.Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, dict):
                for k in sorted(value):
                    if isinstance(value[k], Module):
                        yield from value[k].named_parameters(f"{full}.{k}.")

    def parameters(self) -> list[T.Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())


def uniform_init(rng: np.random.Generator, n_out: int, n_in: int) -> T.Tensor:
    bound = 1.0 / np.sqrt(n_in)
    return T.parameter(rng.uniform(-bound, bound, size=(n_out, n_in)))


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.weight = uniform_init(rng, n_out, n_in)
        self.bias = T.parameter(np.zeros(n_out))

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]

    def __call__(self, x: T.Tensor) -> T.Tensor:
        return T.linear(x, self.weight, self.bias)
