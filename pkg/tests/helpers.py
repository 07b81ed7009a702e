"""Finite-difference oracle shared by the gradient tests."""

import numpy as np


def central_difference(fn, x, h=1e-3):
    g = np.zeros(x.size)
    flat = x.reshape(-1)
    for i in range(x.size):
        e = np.zeros_like(flat)
        e[i] = h
        g[i] = (fn((flat + e).reshape(x.shape)) - fn((flat - e).reshape(x.shape))) / (2 * h)
    return g.reshape(x.shape)


def relative_error(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)
