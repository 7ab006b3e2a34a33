"""Discretized symplectic paths and the omega-index.

The omega-index of a path gamma starting at I is computed by spectral flow of
a unitary model.  A symplectic matrix M is mapped to the unitary ``W_M`` that
represents its graph as a Lagrangian subspace of the doubled space in complex
coordinates; ``W_omega^H W_M`` has eigenvalue 1 exactly on
``ker(M - omega I)``.  Catenating the reference path ``xi_n`` with gamma, the
index equals minus the net counter-clockwise crossing of eigenvalue 1 by the
spectrum of that unitary, i.e. ``(S_end - S_start - dphi) / (2 pi)`` where
``S`` is the sum of eigen-angles taken in ``[0, 2 pi)`` and ``dphi`` is the
continuous change of ``arg det W_M`` along the path.  Only the winding needs
the interior of the path; it does not depend on omega.

Degenerate endpoints are resolved by appending short arcs ``M exp(+-s eps J)``
and taking the smaller of the two resulting indices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .config import DEFAULT, Tolerances
from .errors import NonConvergence, SymplecticViolation
from .symplectic import SymplecticMatrix, make_symplectic, nu_omega, standard_j, symplectic_residual


def _as_stack(mats) -> np.ndarray:
    m = np.asarray(mats, dtype=float)
    return m[None] if m.ndim == 2 else m


def det_a(mats) -> np.ndarray:
    """``det A`` of the complex-linear part ``A = (a + d + i(b - c)) / 2``.

    ``arg det W_M = 2 arg det A + n pi``, so this is all the winding needs.
    """
    m = _as_stack(mats)
    n = m.shape[-1] // 2
    a = 0.5 * (m[:, :n, :n] + m[:, n:, n:] + 1j * (m[:, :n, n:] - m[:, n:, :n]))
    return np.linalg.det(a)


def unitary_model(m) -> np.ndarray:
    """The unitary ``W_M`` attached to a symplectic matrix."""
    m = np.asarray(m, dtype=float)
    n = m.shape[0] // 2
    eye = np.eye(n)
    v = np.block([[eye, eye], [1j * eye, -1j * eye]]) / np.sqrt(2)
    mt = v.conj().T @ m @ v
    a, b, c, d = mt[:n, :n], mt[:n, n:], mt[n:, :n], mt[n:, n:]
    di = np.linalg.inv(d)
    return np.block([[-di @ c, di], [a - b @ di @ c, b @ di]])


def _w_omega(omega: complex, n: int) -> np.ndarray:
    eye = np.eye(n)
    z = np.zeros((n, n))
    return np.block([[z, np.conj(omega) * eye], [omega * eye, z]])


def angle_sum(m, omega: complex) -> float:
    """Sum of eigen-angles in ``[0, 2 pi)`` of ``W_omega^H W_M``."""
    n = np.asarray(m).shape[0] // 2
    u = _w_omega(omega, n).conj().T @ unitary_model(m)
    return float(np.sum(np.mod(np.angle(np.linalg.eigvals(u)), 2 * np.pi)))


def _start_angle_sum(n: int, omega: complex) -> float:
    d = np.diag(np.r_[np.full(n, 2.0), np.full(n, 0.5)])
    return angle_sum(d, omega)


def d_omega(m, omega: complex) -> float:
    """``(-1)^(n-1) conj(omega)^n det(M - omega I)``, which is real for ``|omega| = 1``."""
    a = np.asarray(m, dtype=float)
    n = a.shape[0] // 2
    val = (-1) ** (n - 1) * np.conj(omega) ** n * np.linalg.det(a - omega * np.eye(2 * n))
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real), float(np.abs(a).max()) ** (2 * n)):
        raise ValueError(f"D_omega has imaginary residue {val.imag:.3e}")
    return float(val.real)


class SymplecticPath:
    """A path ``gamma: [0, tau] -> Sp(2n)`` with ``gamma(0) = I``.

    Parameters
    ----------
    tau : float
        Final time.
    func : callable, optional
        Vectorized generator; ``func(ts)`` returns an array of shape
        ``(len(ts), 2n, 2n)``.  When given, refinement queries it directly.
    samples : sequence of (t, M), optional
        Fixed samples; used when no generator is available.
    grid : array_like, optional
        Initial sample times for ``func`` (default 65 uniform points).
    """

    def __init__(self, tau, func=None, samples=None, grid=None, tol: Tolerances = DEFAULT):
        if not tau > 0:
            raise ValueError("tau must be positive")
        self.tau = float(tau)
        self.tol = tol
        self.func = func
        if func is None:
            if samples is None:
                raise ValueError("need func or samples")
            ts = np.array([s[0] for s in samples], dtype=float)
            mats = np.stack([np.asarray(s[1], dtype=float) for s in samples])
        else:
            ts = np.linspace(0.0, self.tau, 65) if grid is None else np.asarray(grid, dtype=float)
            mats = _as_stack(func(ts))
        if ts[0] != 0.0 or abs(ts[-1] - self.tau) > 1e-12 * self.tau or np.any(np.diff(ts) <= 0):
            raise ValueError("sample times must increase strictly from 0 to tau")
        ts[-1] = self.tau
        if np.max(np.abs(mats[0] - np.eye(mats.shape[-1]))) > tol.sympl:
            raise ValueError("path must start at the identity")
        mats[0] = np.eye(mats.shape[-1])
        self.n = mats.shape[-1] // 2
        self.refinement_depth = 0
        self._ts, self._mats = ts, mats
        self._enforce_step_cap()
        for t, m in zip(self._ts, self._mats):
            if symplectic_residual(m) > tol.sympl:
                raise SymplecticViolation(f"path sample at t={t:.6g} is not symplectic")

    # construction helpers
    @classmethod
    def from_scalar_func(cls, tau, f, **kw) -> "SymplecticPath":
        return cls(tau, func=lambda ts: np.stack([np.asarray(f(t), dtype=float) for t in np.atleast_1d(ts)]), **kw)

    def _enforce_step_cap(self):
        for _ in range(self.tol.max_depth):
            jumps = np.max(np.abs(np.diff(self._mats, axis=0)), axis=(1, 2))
            scale = np.maximum(1.0, np.max(np.abs(self._mats[1:]), axis=(1, 2)))
            bad = np.flatnonzero(jumps > self.tol.step_cap * scale)
            if bad.size == 0:
                return
            if self.func is None:
                raise ValueError(f"consecutive samples exceed step cap near t={self._ts[bad[0]]:.6g}")
            self._insert(0.5 * (self._ts[bad] + self._ts[bad + 1]))
        raise NonConvergence("step cap not met within max_depth refinements")

    def _insert(self, new_ts):
        mats = _as_stack(self.func(new_ts))
        ts = np.r_[self._ts, new_ts]
        order = np.argsort(ts, kind="stable")
        self._ts = ts[order]
        self._mats = np.concatenate([self._mats, mats])[order]
        self.refinement_depth += 1

    @property
    def times(self) -> np.ndarray:
        return self._ts

    @property
    def matrices(self) -> np.ndarray:
        return self._mats

    @property
    def samples(self) -> list:
        return list(zip(self._ts.tolist(), self._mats))

    @property
    def endpoint(self) -> SymplecticMatrix:
        return make_symplectic(self._mats[-1], self.tol.sympl)

    def __call__(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if self.func is not None:
            return _as_stack(self.func(ts))
        idx = np.searchsorted(self._ts, ts)
        idx = np.clip(idx, 0, len(self._ts) - 1)
        if not np.allclose(self._ts[idx], ts, rtol=0, atol=1e-14 * self.tau):
            raise ValueError("sample-only path cannot be evaluated off its grid")
        return self._mats[idx]

    def to_json(self) -> dict:
        return {
            "tau": self.tau,
            "samples": [{"t": float(t), "M": {"n": self.n, "rows": m.tolist()}} for t, m in self.samples],
        }

    @classmethod
    def from_json(cls, obj, tol: Tolerances = DEFAULT) -> "SymplecticPath":
        if isinstance(obj, str):
            obj = json.loads(obj)
        samples = [(s["t"], np.array(s["M"]["rows"], dtype=float)) for s in obj["samples"]]
        return cls(obj["tau"], samples=samples, tol=tol)


def special_path_xi(n: int, tau: float, num: int = 65) -> SymplecticPath:
    """``xi_n(t) = diag(2 - t/tau, 1/(2 - t/tau))`` in every plane.

    This runs from ``diag(2, 1/2)`` to ``I``; it is stored with its own first
    sample (not the identity), so it is not a path from ``I`` and is returned
    as a sample container with relaxed start.
    """
    ts = np.linspace(0.0, tau, num)
    lam = 2.0 - ts / tau
    mats = np.zeros((num, 2 * n, 2 * n))
    for k in range(n):
        mats[:, k, k] = lam
        mats[:, n + k, n + k] = 1.0 / lam
    path = SymplecticPath.__new__(SymplecticPath)
    path.tau, path.tol, path.func, path.n = float(tau), DEFAULT, None, n
    path.refinement_depth = 0
    path._ts, path._mats = ts, mats
    return path


def _winding_segment(evalf, ts: np.ndarray, mats: np.ndarray, right, tol: Tolerances):
    """Continuous change of ``arg det A`` along ``t -> gamma(t) @ right``.

    Intervals with a phase step above ``tol.phase_step`` are bisected through
    ``evalf``; convergence is declared when one more uniform bisection leaves
    the total unchanged.
    Returns ``(dphase, ts, mats)`` with the refined grid.
    """

    def phases(m):
        z = det_a(m if right is None else m @ right)
        return z

    z = phases(mats)
    for depth in range(tol.max_depth + 1):
        steps = np.angle(z[1:] / z[:-1])
        bad = np.flatnonzero(np.abs(steps) > tol.phase_step)
        if bad.size == 0:
            total = float(np.sum(steps))
            if evalf is None:
                return total, ts, mats
            mid = 0.5 * (ts[:-1] + ts[1:])
            zm = phases(_as_stack(evalf(mid)))
            check = float(np.sum(np.angle(zm / z[:-1]) + np.angle(z[1:] / zm)))
            if abs(check - total) < 1e-6:
                return total, ts, mats
            bad = np.arange(len(ts) - 1)
        if evalf is None:
            lo, hi = ts[bad[0]], ts[bad[0] + 1]
            raise NonConvergence(f"phase step too large on fixed samples in [{lo:.6g}, {hi:.6g}]", (lo, hi))
        if depth == tol.max_depth:
            break
        new_t = 0.5 * (ts[bad] + ts[bad + 1])
        new_m = _as_stack(evalf(new_t))
        order = np.argsort(np.r_[ts, new_t], kind="stable")
        ts = np.r_[ts, new_t][order]
        mats = np.concatenate([mats, new_m])[order]
        z = np.r_[z, phases(new_m)][order]
    lo, hi = ts[bad[0]], ts[bad[0] + 1]
    raise NonConvergence(f"winding refinement did not converge in [{lo:.6g}, {hi:.6g}]", (lo, hi))


def path_winding(path: SymplecticPath, right=None) -> float:
    """Change of ``arg det W`` along ``gamma(t) @ right``; refines ``path`` in place."""
    dph, ts, mats = _winding_segment(path.func, path._ts, path._mats, right, path.tol)
    path._ts, path._mats = ts, mats
    return 2.0 * dph


@dataclass(frozen=True)
class OmegaIndex:
    omega: complex
    index: int
    nullity: int
    degenerate_endpoint: bool
    diagnostics: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> dict:
        return {
            "omega": [self.omega.real, self.omega.imag],
            "index": self.index,
            "nullity": self.nullity,
            "degenerate_endpoint": self.degenerate_endpoint,
        }


def _round_index(x: float, what: str) -> int:
    k = int(round(x))
    if abs(x - k) > 1e-3:
        raise NonConvergence(f"{what}: non-integral spectral flow {x:.6f}")
    return k


def index_from_winding(endpoint, winding: float, omega: complex, tol: Tolerances = DEFAULT) -> OmegaIndex:
    """Omega-index from the endpoint and the path's total winding of ``arg det W``.

    Splitting this off lets iterated paths reuse accumulated windings.
    """
    m = np.asarray(endpoint, dtype=float)
    n = m.shape[0] // 2
    s0 = _start_angle_sum(n, omega)
    nu = nu_omega(m, omega, tol)
    if nu == 0:
        i = _round_index((angle_sum(m, omega) - s0 - winding) / (2 * np.pi), "omega-index")
        return OmegaIndex(complex(omega), i, 0, False)
    j = standard_j(n)

    def arc_indices(eps):
        out = []
        for sgn in (-1.0, 1.0):
            end = m @ expm(sgn * eps * j)
            w = winding - 2.0 * n * sgn * eps
            out.append(_round_index((angle_sum(end, omega) - s0 - w) / (2 * np.pi), "perturbed endpoint"))
        return tuple(out)

    eps = _arc_eps(m, omega, tol)
    lo, hi = arc_indices(eps)
    lo2, hi2 = arc_indices(eps / 2)
    if (lo, hi) != (lo2, hi2):
        raise NonConvergence(f"endpoint arcs disagree at eps={eps:.2e}: {(lo, hi)} vs {(lo2, hi2)}")
    diag = {"i_minus": lo, "i_plus": hi, "arc_eps": eps}
    if abs(hi - lo) != nu:
        raise NonConvergence(f"endpoint arcs give |i+ - i-| = {abs(hi - lo)} but nullity is {nu}")
    return OmegaIndex(complex(omega), min(lo, hi), nu, True, diag)


def _arc_eps(m: np.ndarray, omega: complex, tol: Tolerances) -> float:
    """Arc length below the spectral gap of the unitary model around 1."""
    n = m.shape[0] // 2
    ev = np.linalg.eigvals(_w_omega(omega, n).conj().T @ unitary_model(m))
    d = np.abs(np.angle(ev))
    far = d[d > 1e-4]
    gap = float(far.min()) if far.size else np.pi
    return min(tol.arc_eps, gap / (8.0 * max(1.0, float(np.abs(m).max()))))


def omega_index(path: SymplecticPath, omega: complex = 1.0, tol: Tolerances | None = None) -> OmegaIndex:
    """The omega-index pair ``(i_omega, nu_omega)`` of a path starting at ``I``."""
    tol = tol or path.tol
    w = path_winding(path)
    return index_from_winding(path.matrices[-1], w, omega, tol)


def iterate_path(path: SymplecticPath, m: int) -> SymplecticPath:
    """``gamma^m(t) = gamma(t - j tau) gamma(tau)^j`` on ``[j tau, (j+1) tau]``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if m == 1:
        return path
    end = path.matrices[-1]
    powers = [np.linalg.matrix_power(end, j) for j in range(m)]
    tau = path.tau
    if path.func is not None:
        def func(ts):
            ts = np.atleast_1d(ts)
            jj = np.minimum((ts // tau).astype(int), m - 1)
            base = path(ts - jj * tau)
            return np.stack([b @ powers[j] for b, j in zip(base, jj)])

        grid = np.concatenate([path.times[:-1] + j * tau for j in range(m)] + [[m * tau]])
        return SymplecticPath(m * tau, func=func, grid=grid, tol=path.tol)
    samples = [(0.0, np.eye(2 * path.n))]
    for j in range(m):
        for t, mat in zip(path.times[1:], path.matrices[1:]):
            samples.append((t + j * tau, mat @ powers[j]))
    return SymplecticPath(m * tau, samples=samples, tol=path.tol)


def catenate(first: SymplecticPath, second: SymplecticPath) -> SymplecticPath:
    """``first`` followed by ``second(t) @ first(tau_1)``; both start at ``I``."""
    t1, end = first.tau, first.matrices[-1]
    if first.func is not None and second.func is not None:
        def func(ts):
            ts = np.atleast_1d(ts)
            out = np.empty((len(ts), 2 * first.n, 2 * first.n))
            a = ts <= t1
            if a.any():
                out[a] = first(ts[a])
            if (~a).any():
                out[~a] = second(ts[~a] - t1) @ end
            return out

        grid = np.r_[first.times, second.times[1:] + t1]
        return SymplecticPath(t1 + second.tau, func=func, grid=grid, tol=first.tol)
    samples = list(first.samples) + [(t + t1, mat @ end) for t, mat in second.samples[1:]]
    return SymplecticPath(t1 + second.tau, samples=samples, tol=first.tol)
