"""Named-tensor container and its binary serialization format.

Container layout (little-endian throughout):

    magic   4 bytes  b"GFLD"
    version u32
    record* until EOF:
        name_len u32, name UTF-8
        rank u64, extents u64 * rank
        payload float32 * prod(extents)

Round-trips are bit-exact for 32-bit stores, which is the storage
contract; 64-bit stores exist only as in-memory reference copies and
refuse to serialize.
"""

from __future__ import annotations

import hashlib
import struct
from typing import Iterator

import numpy as np

from .errors import ConfigError, IntegrityError
from .tensor import Tensor

MAGIC = b"GFLD"
FORMAT_VERSION = 1


class ParamStore:
    """Ordered mapping of parameter names to tensors."""

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}

    def add(self, name: str, value, requires_grad: bool = True, dtype=np.float32) -> Tensor:
        if name in self._tensors:
            raise IntegrityError(f"duplicate parameter name: {name}")
        t = value if isinstance(value, Tensor) else Tensor(value, requires_grad=requires_grad, dtype=dtype)
        t.name = name
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._tensors.items())

    def trainable(self) -> Iterator[tuple[str, Tensor]]:
        return ((n, t) for n, t in self._tensors.items() if t.requires_grad)

    def zero_grad(self):
        for t in self._tensors.values():
            t.grad = None

    def fill_missing_grads(self):
        """Zero gradients for trainable tensors the last backward never reached.

        A parameter can legitimately sit out a step (e.g. an edge label
        with no edges in the batch); its gradient is exactly zero.
        """
        for _, t in self.trainable():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)

    def n_parameters(self) -> int:
        return sum(t.data.size for t in self._tensors.values())

    def astype(self, dtype) -> "ParamStore":
        """Copy of the store at another precision (reference paths)."""
        out = ParamStore()
        for name, t in self._tensors.items():
            out.add(name, t.data.astype(dtype), requires_grad=t.requires_grad, dtype=dtype)
        return out

    def copy(self) -> "ParamStore":
        return self.astype(np.float32)

    def checksum(self) -> str:
        """Content digest over names, shapes and raw values."""
        h = hashlib.sha256()
        for name, t in self._tensors.items():
            h.update(name.encode("utf-8"))
            h.update(str(t.shape).encode("ascii"))
            h.update(np.ascontiguousarray(t.data).tobytes())
        return h.hexdigest()

    def save(self, path):
        save_tensors(path, {n: t.data for n, t in self._tensors.items()})

    @classmethod
    def load(cls, path, requires_grad: bool = True) -> "ParamStore":
        store = cls()
        for name, array in load_tensors(path).items():
            store.add(name, array, requires_grad=requires_grad)
        return store


def save_tensors(path, tensors: dict[str, np.ndarray]):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        for name, array in tensors.items():
            if array.dtype != np.float32:
                raise ConfigError(
                    f"only 32-bit tensors serialize; {name!r} has dtype {array.dtype}"
                )
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<Q", array.ndim))
            for extent in array.shape:
                fh.write(struct.pack("<Q", extent))
            fh.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


def load_tensors(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ConfigError(f"{path}: not a parameter container (bad magic)")
    if len(blob) < 8:
        raise ConfigError(f"{path}: truncated header")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported container version {version}")
    out: dict[str, np.ndarray] = {}
    offset = 8
    total = len(blob)

    def need(n: int):
        if offset + n > total:
            raise ConfigError(f"{path}: truncated container at byte {offset}")

    while offset < total:
        need(4)
        (name_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        need(name_len)
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        need(8)
        (rank,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
        need(8 * rank)
        extents = struct.unpack_from(f"<{rank}Q", blob, offset) if rank else ()
        offset += 8 * rank
        count = int(np.prod(extents)) if extents else 1
        need(4 * count)
        array = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(extents)
        offset += 4 * count
        out[name] = array.astype(np.float32).copy()
    return out
