"""Orthonormal type-II DCT and its inverse (type-III) as separable matrix products."""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def dct_matrix(n: int) -> np.ndarray:
    """``C[k, j] = s_k cos(pi (2j + 1) k / (2n))`` with ``s_0 = sqrt(1/n)``, ``s_k = sqrt(2/n)``."""
    k = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    c = np.cos(np.pi * (2 * j + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    c[0] /= np.sqrt(2.0)
    c.setflags(write=False)
    return c


def _separable(a: np.ndarray, cm: np.ndarray, cn: np.ndarray) -> np.ndarray:
    m, n = a.shape[:2]
    t = (cm @ a.reshape(m, -1)).reshape(m, n, -1)
    return (cn @ t).reshape(a.shape)


def dct2(a: np.ndarray) -> np.ndarray:
    """2-D DCT-II over the first two axes of ``a`` (extra trailing axes are batched)."""
    return _separable(a, dct_matrix(a.shape[0]), dct_matrix(a.shape[1]))


def idct2(a: np.ndarray) -> np.ndarray:
    return _separable(a, dct_matrix(a.shape[0]).T, dct_matrix(a.shape[1]).T)
