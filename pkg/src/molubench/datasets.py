"""Data ingestion and randomness: IDX (MNIST) parsing, normalization,
seeded batching, and the Gaussian sampler used for noise injection.

The random number generator here deliberately avoids the standard
library's RNGs: every experiment in this package must be bit-reproducible
from its seed across builds, so the generator algorithm is fixed in this
file (splitmix64 seeding + xoshiro256**) rather than delegated to
whatever the platform ships.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_MASK64 = (1 << 64) - 1

IMAGE_MAGIC = 0x00000803  # rank-3 unsigned-byte tensor (images)
LABEL_MAGIC = 0x00000801  # rank-1 unsigned-byte tensor (labels)

# Largest element count we accept from an IDX header. Anything bigger is
# treated as a corrupt header rather than an allocation request.
_MAX_ELEMENTS = 1 << 40


class IdxFormatError(ValueError):
    """Base class for malformed IDX input."""


class IdxBadMagicError(IdxFormatError):
    """Magic number is not one of the supported IDX magics."""


class IdxTruncatedError(IdxFormatError):
    """Payload shorter (or longer) than the header promises."""


class IdxDimensionError(IdxFormatError):
    """Header declares an implausibly large tensor."""


@dataclass
class IdxTensor:
    """Raw unsigned-byte tensor as stored in an IDX container."""

    dims: tuple[int, ...]
    data: np.ndarray  # flat uint8, length = product of dims

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.data = np.ascontiguousarray(self.data, dtype=np.uint8).ravel()
        if int(np.prod(self.dims, dtype=np.int64)) != self.data.size:
            raise IdxFormatError(
                f"dims {self.dims} imply {int(np.prod(self.dims))} elements, "
                f"got {self.data.size}"
            )


def parse_idx(raw: bytes) -> IdxTensor:
    """Parse a big-endian IDX byte string.

    Accepts the two container types used by the MNIST distribution:
    magic 0x00000803 (3-D image tensor) and 0x00000801 (1-D label
    vector). Dimension sizes are big-endian unsigned 32-bit integers,
    followed by the raw byte payload.
    """
    if len(raw) < 4:
        raise IdxTruncatedError(f"file too short for magic: {len(raw)} bytes")
    magic = int.from_bytes(raw[:4], "big")
    if magic == IMAGE_MAGIC:
        ndim = 3
    elif magic == LABEL_MAGIC:
        ndim = 1
    else:
        raise IdxBadMagicError(f"bad IDX magic 0x{magic:08X}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxTruncatedError(
            f"header needs {header} bytes, file has {len(raw)}"
        )
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = 1
    for d in dims:
        count *= d
    if count > _MAX_ELEMENTS:
        raise IdxDimensionError(f"dims {dims} overflow sanity cap {_MAX_ELEMENTS}")
    payload = raw[header:]
    if len(payload) != count:
        raise IdxTruncatedError(
            f"dims {dims} promise {count} payload bytes, got {len(payload)}"
        )
    return IdxTensor(dims, np.frombuffer(payload, dtype=np.uint8))


def serialize_idx(tensor: IdxTensor) -> bytes:
    """Inverse of parse_idx; only rank-1 and rank-3 tensors are valid."""
    if len(tensor.dims) == 3:
        magic = IMAGE_MAGIC
    elif len(tensor.dims) == 1:
        magic = LABEL_MAGIC
    else:
        raise IdxFormatError(f"unsupported rank {len(tensor.dims)}")
    out = magic.to_bytes(4, "big")
    for d in tensor.dims:
        out += int(d).to_bytes(4, "big")
    return out + tensor.data.tobytes()


def load_idx(path: str | Path) -> IdxTensor:
    return parse_idx(Path(path).read_bytes())


def normalize_images(raw: IdxTensor) -> np.ndarray:
    """Flatten a rank-3 byte tensor to an (n, h*w) float64 matrix in [0, 1].

    Pixels map as byte/255; no mean/std standardization.
    """
    if len(raw.dims) != 3:
        raise IdxFormatError(f"expected rank-3 image tensor, got rank {len(raw.dims)}")
    n, h, w = raw.dims
    return raw.data.astype(np.float64).reshape(n, h * w) / 255.0


def _splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class SeededPrng:
    """Deterministic 64-bit generator: xoshiro256** seeded via splitmix64.

    Identical seeds yield identical streams on every platform. The state
    advances exactly once per next_u64 call; higher-level draws document
    how many u64s they consume. Instances are single-owner: do not share
    one generator across threads, give each parallel run its own.
    """

    def __init__(self, seed: int):
        sm = int(seed) & _MASK64
        state = []
        for _ in range(4):
            sm, word = _splitmix64(sm)
            state.append(word)
        self._s = state

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) with 53-bit resolution. One u64."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform(self, low: float, high: float) -> float:
        """Uniform double in [low, high). One u64."""
        return low + (high - low) * self.random()

    def randbelow(self, n: int) -> int:
        """Integer in [0, n). One u64; modulo bias is < n/2**64."""
        if n <= 0:
            raise ValueError(f"randbelow needs n >= 1, got {n}")
        return self.next_u64() % n

    def gaussian(self, mean: float = 0.0, sigma: float = 1.0) -> float:
        """Normal draw via the Box-Muller transform.

        Always consumes exactly two u64s (the second transform output is
        discarded, not cached), so the stream position stays a pure
        function of the number of calls. sigma = 0 returns mean exactly.
        """
        if sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {sigma}")
        u1 = 1.0 - self.random()  # (0, 1]: keeps log() finite
        u2 = self.random()
        z = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
        return mean + sigma * z

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates shuffle of range(n). Consumes n-1 u64s (n >= 2)."""
        idx = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randbelow(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx


def shuffled_batches(n: int, batch_size: int, prng: SeededPrng) -> list[np.ndarray]:
    """Shuffle 0..n-1 and chunk into batches; the last may be short.

    Each call draws a fresh permutation from the generator, so calling
    once per epoch with the same advancing generator gives a new order
    every epoch while staying reproducible from the seed.
    """
    if n <= 0:
        raise ValueError(f"cannot batch an empty dataset (n={n})")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    perm = prng.permutation(n)
    return [
        np.asarray(perm[i : i + batch_size], dtype=np.intp)
        for i in range(0, n, batch_size)
    ]
