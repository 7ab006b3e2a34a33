import numpy as np
import pytest

from closedchar.pathindex import SymplecticPath
from closedchar.symplectic import standard_j

R2 = (1.0, 2.0**0.25)
R3 = (1.0, 2.0**0.25, 3.0**0.25)


def interleave(blocks):
    """Diamond product of stacks of 2x2 blocks, shape ``(N, 2, 2)`` each."""
    n = len(blocks)
    num = blocks[0].shape[0]
    out = np.zeros((num, 2 * n, 2 * n))
    for k, b in enumerate(blocks):
        out[:, k, k] = b[:, 0, 0]
        out[:, k, n + k] = b[:, 0, 1]
        out[:, n + k, k] = b[:, 1, 0]
        out[:, n + k, n + k] = b[:, 1, 1]
    return out


def rot_stack(theta_t):
    c, s = np.cos(theta_t), np.sin(theta_t)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def rot_func(theta):
    """Generator ``t -> R(t theta)`` on ``[0, 1]``."""
    return lambda ts: rot_stack(theta * np.atleast_1d(ts))


def shear_func(b):
    """Generator ``t -> [[1, b t], [0, 1]]`` on ``[0, 1]``."""

    def f(ts):
        ts = np.atleast_1d(ts)
        out = np.zeros((ts.size, 2, 2))
        out[:, 0, 0] = out[:, 1, 1] = 1.0
        out[:, 0, 1] = b * ts
        return out

    return f


def rot_then_shear_func(b, turns=1):
    """``t -> R(2 pi turns t) [[1, b t], [0, 1]]``; ends at the same shear."""
    sh = shear_func(b)
    return lambda ts: rot_stack(2 * np.pi * turns * np.atleast_1d(ts)) @ sh(ts)


def diamond_func(*funcs):
    return lambda ts: interleave([f(ts) for f in funcs])


def path_of(func, tau=1.0):
    return SymplecticPath(tau, func=func)


def linear_system_func(s1, s2):
    """``t -> exp(t J S1) exp(t^2 J S2)`` by eigendecomposition (vectorized)."""
    n = s1.shape[0] // 2
    J = standard_j(n)
    w1, v1 = np.linalg.eig(J @ s1)
    w2, v2 = np.linalg.eig(J @ s2)
    v1i, v2i = np.linalg.inv(v1), np.linalg.inv(v2)

    def f(ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        e1 = np.einsum("ij,tj,jk->tik", v1, np.exp(np.outer(ts, w1)), v1i)
        e2 = np.einsum("ij,tj,jk->tik", v2, np.exp(np.outer(ts**2, w2)), v2i)
        return np.real(e1 @ e2)

    return f


def random_linear_path(rng, n, scale=1.5):
    def sym():
        a = rng.normal(size=(2 * n, 2 * n)) * scale
        return (a + a.T) / 2

    return path_of(linear_system_func(sym(), 0.3 * sym()))


@pytest.fixture
def rng():
    return np.random.default_rng(20241018)
