from __future__ import annotations

import numpy as np

from . import container
from .tensor import Tensor


class ParameterSet:
    """Named trainable tensors plus a JSON-serializable layout descriptor.

    Sub-networks are addressed with dotted prefixes: ``ps.sub("encoder")``
    returns a view whose tensors are shared with ``ps``, so in-place
    optimizer updates through either object are visible to both.
    """

    def __init__(self, tensors: dict, layout: dict | None = None):
        self._tensors: dict[str, Tensor] = {}
        for name, value in tensors.items():
            if name in self._tensors:
                raise ValueError(f"duplicate parameter {name!r}")
            if isinstance(value, Tensor):
                value.requires_grad = True
                self._tensors[name] = value
            else:
                self._tensors[name] = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self.layout = dict(layout or {})

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name) -> bool:
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self._tensors.items()}

    def num_values(self) -> int:
        return int(sum(t.data.size for t in self._tensors.values()))

    def sub(self, prefix: str) -> "ParameterSet":
        head = prefix + "."
        view = ParameterSet.__new__(ParameterSet)
        view._tensors = {k[len(head):]: t for k, t in self._tensors.items() if k.startswith(head)}
        view.layout = dict(self.layout.get(prefix, {}))
        return view

    @classmethod
    def merge(cls, parts: dict) -> "ParameterSet":
        out = cls.__new__(cls)
        out._tensors = {}
        out.layout = {}
        for prefix, ps in parts.items():
            for k, t in ps.items():
                out._tensors[f"{prefix}.{k}"] = t
            out.layout[prefix] = ps.layout
        return out

    def copy(self) -> "ParameterSet":
        return ParameterSet({k: t.data.copy() for k, t in self._tensors.items()}, _deepcopy(self.layout))

    def zeros_like(self) -> "ParameterSet":
        return ParameterSet({k: np.zeros_like(t.data) for k, t in self._tensors.items()}, _deepcopy(self.layout))

    def assign(self, arrays: dict) -> None:
        for k, v in arrays.items():
            t = self._tensors[k]
            v = np.asarray(v, dtype=np.float64)
            if v.shape != t.shape:
                raise ValueError(f"shape mismatch for {k!r}: expected {t.shape}, got {v.shape}")
            t.data[...] = v

    # persistence -----------------------------------------------------------
    def save(self, path, kind: str = "params", meta: dict | None = None) -> None:
        header = dict(meta or {})
        header["layout"] = self.layout
        container.save(path, kind, self.arrays(), header)

    @classmethod
    def load(cls, path, expect_kind: str | None = None) -> tuple["ParameterSet", dict]:
        meta, arrays = container.load(path, expect_kind)
        layout = meta.pop("layout", {})
        return cls(arrays, layout), meta


def _deepcopy(obj):
    if isinstance(obj, dict):
        return {k: _deepcopy(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_deepcopy(v) for v in obj]
    return obj
