"""Hot inner loops of the term algebra.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
version with identical semantics. The active implementation is chosen once
at import time from ``PRETHERMAL_BACKEND`` (``numba`` or ``numpy``); numba is
used when available unless the variable says otherwise.
"""
from __future__ import annotations

import os
from functools import lru_cache

import numpy as np

try:
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

_requested = os.environ.get("PRETHERMAL_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"PRETHERMAL_BACKEND must be 'numba' or 'numpy', got {_requested!r}")
BACKEND = "numba" if (HAVE_NUMBA and _requested == "numba") else "numpy"

# Per-site change of basis between ladder letters (I, +, -, Z) and local
# matrix elements e = 2*row + col (up = 0).  LETTER_TO_ELEM[l, e].
LETTER_TO_ELEM = np.array(
    [
        [1.0, 0.0, 0.0, 1.0],  # I
        [0.0, 1.0, 0.0, 0.0],  # + = |0><1|
        [0.0, 0.0, 1.0, 0.0],  # - = |1><0|
        [1.0, 0.0, 0.0, -1.0],  # Z
    ],
    dtype=np.complex128,
)
ELEM_TO_LETTER = np.array(
    [
        [0.5, 0.0, 0.0, 0.5],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.5, 0.0, 0.0, -0.5],
    ],
    dtype=np.complex128,
)


@lru_cache(maxsize=32)
def elem_to_flat(k: int) -> np.ndarray:
    """Flat matrix index (row * 2**k + col) of each base-4 element index."""
    idx = np.zeros(4**k, dtype=np.int64)
    codes = np.arange(4**k, dtype=np.int64)
    row = np.zeros_like(codes)
    col = np.zeros_like(codes)
    for site in range(k):
        digit = (codes // 4 ** (k - 1 - site)) % 4
        row = (row << 1) | (digit >> 1)
        col = (col << 1) | (digit & 1)
    idx[:] = row * (1 << k) + col
    idx.setflags(write=False)
    return idx


@lru_cache(maxsize=256)
def index_maps(pos: tuple[int, ...], n: int) -> tuple[np.ndarray, np.ndarray]:
    """Index tables for placing a k-site block inside an n-site register.

    ``pos[j]`` is the register position (0 = most significant) of the block's
    j-th site. Returns ``(spread, base)``: ``spread[i]`` is the register index
    of block configuration ``i`` with all other sites up, ``base[r]`` the
    register index of configuration ``r`` of the remaining sites.
    """
    k = len(pos)
    rest = [p for p in range(n) if p not in pos]
    spread = np.zeros(1 << k, dtype=np.int64)
    for i in range(1 << k):
        v = 0
        for j, p in enumerate(pos):
            if (i >> (k - 1 - j)) & 1:
                v |= 1 << (n - 1 - p)
        spread[i] = v
    base = np.zeros(1 << len(rest), dtype=np.int64)
    m = len(rest)
    for r in range(1 << m):
        v = 0
        for j, p in enumerate(rest):
            if (r >> (m - 1 - j)) & 1:
                v |= 1 << (n - 1 - p)
        base[r] = v
    spread.setflags(write=False)
    base.setflags(write=False)
    return spread, base


# --------------------------------------------------------------------------
# numpy implementations


def _site_transform_numpy(vec: np.ndarray, T: np.ndarray, k: int) -> np.ndarray:
    out = np.asarray(vec, dtype=np.complex128)
    for axis in range(k):
        out = out.reshape(4**axis, 4, 4 ** (k - axis - 1))
        out = np.einsum("ajb,je->aeb", out, T)
    return out.reshape(4**k)


def _scatter_add_numpy(out, block, spread, base):
    idx = base[:, None] | spread[None, :]
    out[idx[:, :, None], idx[:, None, :]] += block[None, :, :]


# --------------------------------------------------------------------------
# numba implementations

if HAVE_NUMBA:

    @njit(cache=True)
    def _site_transform_numba(vec, T, k):
        out = vec.astype(np.complex128)
        tmp = np.empty(4, dtype=np.complex128)
        size = out.size
        stride = 1
        for _ in range(k):
            block = 4 * stride
            for outer in range(0, size, block):
                for inner in range(stride):
                    b = outer + inner
                    for l in range(4):
                        tmp[l] = out[b + l * stride]
                    for e in range(4):
                        s = 0j
                        for l in range(4):
                            s += tmp[l] * T[l, e]
                        out[b + e * stride] = s
            stride *= 4
        return out

    @njit(cache=True)
    def _scatter_add_numba(out, block, spread, base):
        d = spread.size
        for r in range(base.size):
            b = base[r]
            for i in range(d):
                ri = b | spread[i]
                for j in range(d):
                    out[ri, b | spread[j]] += block[i, j]


# --------------------------------------------------------------------------
# public dispatch

if BACKEND == "numba":
    _site_transform = _site_transform_numba
    _scatter_add = _scatter_add_numba
else:
    _site_transform = _site_transform_numpy
    _scatter_add = _scatter_add_numpy


def ladder_to_matrix(coeffs: np.ndarray, k: int) -> np.ndarray:
    """Dense 2**k matrix of a ladder coefficient vector of length 4**k."""
    elems = _site_transform(np.ascontiguousarray(coeffs), LETTER_TO_ELEM, k)
    mat = np.empty((1 << k) * (1 << k), dtype=np.complex128)
    mat[elem_to_flat(k)] = elems
    return mat.reshape(1 << k, 1 << k)


def matrix_to_ladder(mat: np.ndarray, k: int) -> np.ndarray:
    elems = np.ascontiguousarray(mat).reshape(-1)[elem_to_flat(k)]
    return _site_transform(elems, ELEM_TO_LETTER, k)


def scatter_add(out: np.ndarray, block: np.ndarray, pos: tuple[int, ...], n: int) -> None:
    """In place: ``out += block ⊗ 1`` with the block acting on register positions ``pos``."""
    spread, base = index_maps(tuple(pos), n)
    _scatter_add(out, np.ascontiguousarray(block, dtype=np.complex128), spread, base)


def embed(block: np.ndarray, pos: tuple[int, ...], n: int) -> np.ndarray:
    out = np.zeros((1 << n, 1 << n), dtype=np.complex128)
    scatter_add(out, block, pos, n)
    return out


def apply_left(block: np.ndarray, pos: tuple[int, ...], mat: np.ndarray, n: int) -> np.ndarray:
    """``(block ⊗ 1) @ mat`` without forming ``block ⊗ 1``."""
    k = len(pos)
    t = mat.reshape((2,) * n + (mat.shape[1],))
    t = np.moveaxis(t, pos, tuple(range(k)))
    shape = t.shape
    t = (block @ t.reshape(1 << k, -1)).reshape(shape)
    return np.moveaxis(t, tuple(range(k)), pos).reshape(mat.shape)


def apply_right(block: np.ndarray, pos: tuple[int, ...], mat: np.ndarray, n: int) -> np.ndarray:
    """``mat @ (block ⊗ 1)``."""
    return apply_left(block.T, pos, mat.T, n).T
