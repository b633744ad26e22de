"""Parameter containers for the layer primitives."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import functional as F
from .tensor import DEFAULT_DTYPE, Tensor


class Module:
    """Minimal module tree: Tensor attributes that require grad are parameters,
    Module attributes are children. Registration order fixes parameter names."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
            self._children.pop(name, None)
        elif isinstance(value, Module):
            self._children[name] = value
            self._params.pop(name, None)
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for child in self._children.values():
            yield from child.modules()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = [k for k in params if k not in state]
        if missing:
            raise KeyError(f"missing parameter '{missing[0]}' ({len(missing)} missing in total)")
        unexpected = [k for k in state if k not in params]
        if unexpected:
            raise KeyError(f"unexpected parameter '{unexpected[0]}'")
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"shape mismatch for '{name}': {arr.shape} vs {p.shape}")
            p.data = np.ascontiguousarray(arr.astype(p.dtype))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def to(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            if p.grad is not None:
                p.grad = p.grad.astype(dtype)
        return self

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items: list[Module] = []
        for m in modules:
            self.append(m)

    def append(self, m: Module) -> None:
        setattr(self, str(len(self._items)), m)
        self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def param(arr) -> Tensor:
    return Tensor(np.asarray(arr, dtype=DEFAULT_DTYPE), requires_grad=True)


class Conv2d(Module):
    def __init__(self, kind: F.ConvKind, cin: int, cout: int, k: int = 1, s: int = 1, p: int = 0,
                 bias: bool = True, rng: np.random.Generator | None = None):
        super().__init__()
        if kind == "pointwise":
            k, s, p = 1, 1, 0
        self.kind, self.cin, self.cout, self.k, self.s, self.p = kind, cin, cout, k, s, p
        shape = F.expected_weight_shape(kind, cin, cout, k)
        fan_in = shape[1] * k * k
        bound = 1.0 / np.sqrt(fan_in)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = param(rng.uniform(-bound, bound, size=shape))
        self.bias = param(np.zeros(cout)) if bias else None

    @property
    def params(self) -> F.Conv2dParams:
        return F.Conv2dParams(self.kind, self.cin, self.cout, self.k, self.s, self.p,
                              self.weight, self.bias)

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.params)

    def __repr__(self):
        return f"Conv2d({self.kind}, {self.cin}->{self.cout}, k={self.k}, s={self.s}, p={self.p})"


class LayerNorm2d(Module):
    def __init__(self, c: int, eps: float = 1e-6):
        super().__init__()
        self.eps = eps
        self.weight = param(np.ones(c))
        self.bias = param(np.zeros(c))

    def forward(self, x: Tensor) -> Tensor:
        return F.channel_layer_norm(x, self.weight, self.bias, self.eps)


class SCA(Module):
    def __init__(self, c: int, rng: np.random.Generator | None = None):
        super().__init__()
        self.conv = Conv2d("pointwise", c, c, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        return F.sca(x, self.conv.weight, self.conv.bias)
