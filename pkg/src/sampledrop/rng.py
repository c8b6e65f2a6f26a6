"""Reproducible hierarchical random streams.

A stream is identified by a 64-bit root seed plus a path of components such
as (step, forward index, layer, sentence). Forking appends a component and
yields a statistically independent child stream. Keys are derived from the
seed and path with a SplitMix64 chain; the generator behind a key is
numpy's Philox4x64 counter-based bit generator, so identical (seed, path)
pairs reproduce identical draws on any platform.

Path components may be non-negative integers or short strings; strings are
folded to 64 bits with FNV-1a before mixing, and the two kinds are domain
separated so fork(1) and fork("1") differ.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_INT_TAG = 0x9D8A7B6C5D4E3F2A
_STR_TAG = 0x1F2E3D4C5B6A7988


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & _MASK64
    return h


def _component_code(component: int | str) -> int:
    if isinstance(component, bool):
        raise TypeError("stream path components must be int or str, not bool")
    if isinstance(component, int):
        if component < 0:
            raise ValueError(f"stream path components must be >= 0, got {component}")
        return (component ^ _INT_TAG) & _MASK64
    if isinstance(component, str):
        return (_fnv1a64(component.encode("utf-8")) ^ _STR_TAG) & _MASK64
    raise TypeError(f"stream path components must be int or str, got {type(component).__name__}")


class RngStream:
    """One reproducible stream: (root seed, path) -> Philox generator.

    The underlying generator is created lazily on first draw and then
    advances with use, so a stream object is stateful. ``fork`` always
    returns a fresh child whose draws depend only on (seed, child path).
    """

    __slots__ = ("seed", "path", "_gen")

    def __init__(self, seed: int, path: tuple[int | str, ...] = ()):
        self.seed = seed & _MASK64
        self.path = tuple(path)
        self._gen: np.random.Generator | None = None

    def fork(self, component: int | str) -> "RngStream":
        return RngStream(self.seed, self.path + (_normalize(component),))

    def key(self) -> tuple[int, int]:
        """128-bit Philox key derived from seed and path."""
        state = _splitmix64(self.seed)
        for comp in self.path:
            state = _splitmix64(state ^ _component_code(comp))
        k0 = _splitmix64(state)
        k1 = _splitmix64(k0)
        return k0, k1

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            k0, k1 = self.key()
            bitgen = np.random.Philox(key=np.array([k0, k1], dtype=np.uint64))
            self._gen = np.random.Generator(bitgen)
        return self._gen

    def uniform(self) -> float:
        """One float64 deviate in [0, 1)."""
        return float(self.generator.random())

    def random(self, shape) -> np.ndarray:
        """Array of float64 deviates in [0, 1)."""
        return self.generator.random(shape)

    def integers(self, low: int, high: int, size=None):
        """Integers in [low, high)."""
        return self.generator.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path!r})"


def _normalize(component: int | str) -> int | str:
    # Validate eagerly so bad components fail at fork time, not at key time.
    _component_code(component)
    return component
