from __future__ import annotations

import numpy as np

from .tensor import Tensor


class Parameter(Tensor):
    """A trainable leaf tensor with a model-unique name."""

    __slots__ = ("name",)

    def __init__(self, data: np.ndarray, name: str | None = None):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        if self.grad is None or self.grad.shape != self.data.shape:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


class Module:
    """Attribute-walking container, in the spirit of torch.nn.Module.

    Parameters, sub-modules and lists of either are discovered from instance
    attributes in insertion order, so names and ordering are deterministic.
    """

    def named_parameters(self, prefix: str = ""):
        seen: set[int] = set()
        yield from self._walk(prefix, seen)

    def _walk(self, prefix, seen):
        for attr, value in vars(self).items():
            path = f"{prefix}{attr}"
            yield from _walk_value(path, value, seen)

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def assign_names(self) -> None:
        """Give every parameter its first attribute path as its name."""
        for path, p in self.named_parameters():
            if p.name is None:
                p.name = path

    def zero_grads(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def modules(self):
        yield self
        for value in vars(self).values():
            for item in value if isinstance(value, (list, tuple)) else (value,):
                if isinstance(item, Module):
                    yield from item.modules()


def _walk_value(path, value, seen):
    if isinstance(value, Parameter):
        if id(value) not in seen:
            seen.add(id(value))
            yield path, value
    elif isinstance(value, Module):
        yield from value._walk(path + ".", seen)
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk_value(f"{path}.{i}", item, seen)


def count_parameters(model: Module) -> int:
    """Total element count over unique parameters (deduplicated by name)."""
    by_name = {}
    for path, p in model.named_parameters():
        by_name.setdefault(p.name or path, p)
    return int(sum(p.data.size for p in by_name.values()))


def uniform_init(rng: np.random.Generator, shape, scale: float | None = 0.1, dtype=np.float64) -> np.ndarray:
    """Uniform(-scale, scale); ``scale=None`` uses the Glorot limit sqrt(6 / (fan_in + fan_out))."""
    if scale is None:
        fan_in, fan_out = (shape[0], shape[-1]) if len(shape) > 1 else (1, shape[0])
        scale = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.uniform(-scale, scale, size=shape).astype(dtype)
