"""Dense float64 tensor helpers and named, reproducible random streams.

Tensors are plain ``numpy.ndarray`` objects in float64, row-major. The helpers
here add the shape checks and finiteness guarantees the rest of the package
relies on.
"""

from __future__ import annotations

import hashlib

import numpy as np

Tensor = np.ndarray


class DimensionError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


def as_tensor(x) -> Tensor:
    return np.ascontiguousarray(x, dtype=np.float64)


def check_finite(t: Tensor, what: str = "tensor") -> Tensor:
    if not np.all(np.isfinite(t)):
        raise NonFiniteError(f"{what} contains NaN or Inf")
    return t


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return check_finite(a @ b, "matmul result")


def reduce_mean(a: Tensor, axis: int) -> Tensor:
    a = as_tensor(a)
    if not 0 <= axis < a.ndim:
        raise DimensionError(f"axis {axis} out of range for rank {a.ndim}")
    if a.shape[axis] == 0:
        raise DimensionError(f"cannot average over empty axis {axis}")
    return a.mean(axis=axis)


def flat_index(i: int, j: int, ncols: int) -> int:
    return i * ncols + j


def _name_key(name: str) -> tuple[int, ...]:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[k:k + 4], "little") for k in range(0, 16, 4))


class Rng:
    """Seeded PCG64 stream that can fork independent children by name.

    ``Rng(7).fork("init")`` always yields the same stream, regardless of how
    many samples were drawn from the parent, so data shuffling, dropout masks
    and weight init never perturb each other.
    """

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._key = _key
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=_key)
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def fork(self, name: str) -> "Rng":
        return Rng(self.seed, self._key + _name_key(name))

    def normal(self, shape, mean: float = 0.0, stddev: float = 1.0) -> Tensor:
        return rng_normal(self, shape, mean, stddev)

    def uniform(self, shape, low: float = 0.0, high: float = 1.0) -> Tensor:
        return self.gen.uniform(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self.gen.choice(n, size=size, replace=replace)

    def integers(self, low: int, high: int, size=None):
        return self.gen.integers(low, high, size=size)


def rng_normal(rng: Rng, shape, mean: float = 0.0, stddev: float = 1.0) -> Tensor:
    if stddev < 0:
        raise ValueError(f"stddev must be non-negative, got {stddev}")
    z = rng.gen.standard_normal(size=shape)
    return mean + stddev * z
