"""Counter-based random streams.

Every random number used by the package is a pure function of a 64-bit key
and a position in the stream, so results do not depend on how work is
split between workers.  The generator is numpy's Philox4x64; output word
``i`` of key ``k`` is read by advancing the counter to block ``i // 4``.
"""

from __future__ import annotations

import zlib

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1


def _tag(key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return int(key) & _MASK64


def derive_seed(master: int, *keys) -> int:
    """Derive a 64-bit child seed from ``master`` and a path of int/str tags."""
    ss = np.random.SeedSequence(entropy=int(master) & _MASK64,
                                spawn_key=tuple(_tag(k) for k in keys))
    lo, hi = ss.generate_state(2, np.uint32)
    return (int(hi) << 32) | int(lo)


def raw_words(seed: int, start: int, count: int) -> np.ndarray:
    """Words ``start .. start+count-1`` of the stream keyed by ``seed``."""
    if count <= 0:
        return np.empty(0, dtype=np.uint64)
    gen = np.random.Philox(key=int(seed) & _MASK64)
    block, offset = divmod(int(start), 4)
    if block:
        gen.advance(block)
    return gen.random_raw(count + offset)[offset:]


def uniforms(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Uniform variates on the open interval (0, 1)."""
    words = raw_words(seed, start, count)
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def normals(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Standard normals by inversion, one stream word per variate."""
    return ndtri(uniforms(seed, count, start))


def uniform_matrix(seed: int, rows: int, cols: int, row_start: int = 0) -> np.ndarray:
    """Entry (r, c) is stream word ``(row_start + r) * cols + c``."""
    return uniforms(seed, rows * cols, start=row_start * cols).reshape(rows, cols)


def normal_matrix(seed: int, rows: int, cols: int, row_start: int = 0) -> np.ndarray:
    return ndtri(uniform_matrix(seed, rows, cols, row_start))
