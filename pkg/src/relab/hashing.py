"""Seeded 64-bit avalanche hashing and 128-bit row digests, vectorized.

All functions are deterministic: the same bytes and seeds give the same
values on every run and platform (little-endian word interpretation is
explicit). Constants follow the murmur3 finalizer and splitmix64.
"""

from __future__ import annotations

import numpy as np

_U64 = np.uint64
_MASK64 = (1 << 64) - 1

_FMIX_C1 = _U64(0xFF51AFD7ED558CCD)
_FMIX_C2 = _U64(0xC4CEB9FE1A85EC53)
_S33 = _U64(33)

# Lane seeds for the two independent 64-bit digest lanes.
_LANE_SEEDS = (0x8C2F1D7A6E5B3940, 0x1F83D9ABFB41BD6B)


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 generator; returns (next_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, (z ^ (z >> 31)) & _MASK64


def fmix64(x: np.ndarray) -> np.ndarray:
    """Murmur3 64-bit finalizer applied elementwise to a uint64 array."""
    x = x.astype(np.uint64, copy=True)
    x ^= x >> _S33
    x *= _FMIX_C1
    x ^= x >> _S33
    x *= _FMIX_C2
    x ^= x >> _S33
    return x


def mix64_scalar(value: int) -> int:
    """fmix64 for a single Python int (used to pre-mix seeds)."""
    x = value & _MASK64
    x ^= x >> 33
    x = (x * 0xFF51AFD7ED558CCD) & _MASK64
    x ^= x >> 33
    x = (x * 0xC4CEB9FE1A85EC53) & _MASK64
    x ^= x >> 33
    return x


def hash_i64(keys: np.ndarray, seed: int) -> np.ndarray:
    """Seeded avalanche hash of an int64 array, as uint64.

    h(k) = fmix64(u64(k) XOR fmix64(seed)); distinct seeds give
    effectively independent partitionings of the key space.
    """
    u = np.ascontiguousarray(keys, dtype=np.int64).view(np.uint64)
    return fmix64(u ^ _U64(mix64_scalar(seed)))


def _lane_constants(seed: int, n_words: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-word odd multipliers and xor offsets from a splitmix64 stream."""
    mults = np.empty(n_words, dtype=np.uint64)
    offs = np.empty(n_words, dtype=np.uint64)
    state = seed
    for j in range(n_words):
        state, a = splitmix64(state)
        state, b = splitmix64(state)
        mults[j] = _U64(a | 1)
        offs[j] = _U64(b)
    return mults, offs


def row_digests(matrix: np.ndarray) -> np.ndarray:
    """Per-row 128-bit hashes of an (n, width) uint8 matrix.

    Rows are padded with zeros to a multiple of 8, read as little-endian
    64-bit words, folded per lane as XOR_j((word_j ^ Z_j) * K_j), and
    finalized per row with fmix64. Returns an (n, 2) uint64 array.
    """
    if matrix.ndim != 2 or matrix.dtype != np.uint8:
        raise ValueError("row_digests expects an (n, width) uint8 matrix")
    n, width = matrix.shape
    out = np.empty((n, 2), dtype=np.uint64)
    if n == 0:
        return out
    n_words = max(1, -(-width // 8))
    padded = np.zeros((n, n_words * 8), dtype=np.uint8)
    padded[:, :width] = matrix
    words = padded.view("<u8")
    for lane, lane_seed in enumerate(_LANE_SEEDS):
        mults, offs = _lane_constants(lane_seed ^ width, n_words)
        acc = np.full(n, mix64_scalar(lane_seed + width), dtype=np.uint64)
        for j in range(n_words):
            acc ^= (words[:, j] ^ offs[j]) * mults[j]
        out[:, lane] = fmix64(acc)
    return out


def combine_digests(lanes: np.ndarray) -> int:
    """XOR-accumulate (n, 2) uint64 lanes into one 128-bit Python int."""
    if lanes.shape[0] == 0:
        return 0
    hi = int(np.bitwise_xor.reduce(lanes[:, 0]))
    lo = int(np.bitwise_xor.reduce(lanes[:, 1]))
    return (hi << 64) | lo
