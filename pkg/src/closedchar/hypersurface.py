"""Convex bodies, the homogeneous Hamiltonians ``H_alpha = j^alpha`` and their flows."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import DOP853, OdeSolution
from scipy.optimize import brentq, least_squares
from scipy.spatial.distance import cdist

from .config import DEFAULT, Tolerances
from .errors import (
    DegenerateRadii,
    DualGaugeNonConvergence,
    EnergyDrift,
    InvariantViolation,
    OriginSingularity,
    StepFailure,
    SymmetryAmbiguous,
)
from .pathindex import SymplecticPath
from .symplectic import SymplecticMatrix, diamond, make_symplectic, nu_omega, standard_j

log = logging.getLogger(__name__)


class Ellipsoid:
    """``E(r_1, ..., r_n)`` with gauge ``j(x)^2 = sum (q_k^2 + p_k^2) / r_k^2``."""

    kind = "ellipsoid"
    symmetric = True

    def __init__(self, radii):
        r = np.asarray(radii, dtype=float)
        if r.ndim != 1 or r.size < 1 or np.any(r <= 0):
            raise ValueError("radii must be a nonempty list of positive numbers")
        self.radii = r
        self.n = r.size
        self._a = np.r_[1.0 / r**2, 1.0 / r**2]

    @property
    def diameter(self) -> float:
        return 2.0 * float(self.radii.max())

    def gauge(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.sqrt(np.sum(self._a * x * x, axis=-1))

    def gauge_grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._a * x / self.gauge(x)[..., None]

    def gauge_hess(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        j = self.gauge(x)
        ax = self._a * x
        return np.diag(self._a) / j - np.outer(ax, ax) / j**3

    def dual_gauge(self, y) -> np.ndarray:
        """Support function ``max{x . y : j(x) <= 1}``."""
        y = np.asarray(y, dtype=float)
        return np.sqrt(np.sum(y * y / self._a, axis=-1))

    def dual_gauge_grad(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return (y / self._a) / self.dual_gauge(y)[..., None]

    def dual_gauge_hess(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        g = self.dual_gauge(y)
        b = y / self._a
        return np.diag(1.0 / self._a) / g - np.outer(b, b) / g**3

    def to_json(self) -> dict:
        return {"kind": "ellipsoid", "radii": self.radii.tolist()}


def _richardson(f, x, h):
    """Fourth-order central difference of ``f`` at ``x`` along every axis."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = 1.0

        def d(step):
            return (np.asarray(f(x + step * e)) - np.asarray(f(x - step * e))) / (2 * step)

        cols.append((4.0 * d(h / 2) - d(h)) / 3.0)
    return np.stack(cols, axis=-1)


class GaugeTableBody:
    """Convex body given by a boundary function ``F`` with ``F < 0`` inside.

    The gauge is found by radial root-finding; derivatives are Richardson
    finite differences and the dual gauge comes from projected ascent.

    Parameters
    ----------
    n : int
        Half dimension.
    boundary : callable
        ``F(x)``; the body is ``{F <= 0}`` and must contain a ball around 0.
    symmetric : bool
        Whether ``F(-x) = F(x)``.
    """

    kind = "gauge-table"

    def __init__(self, n: int, boundary, symmetric: bool = False, diameter: float | None = None, spec=None):
        self.n = n
        self.boundary = boundary
        self.symmetric = symmetric
        self._spec = spec
        if diameter is None:
            dirs = np.eye(2 * n)
            diameter = 2.0 * max(1.0 / self.gauge(s * d) for d in dirs for s in (1, -1))
        self.diameter = diameter

    @classmethod
    def quartic(cls, a, b: float) -> "GaugeTableBody":
        """``sum a_i x_i^2 + b (sum x_i^2)^2 = 1`` with ``a_i > 0``, ``b >= 0``."""
        a = np.asarray(a, dtype=float)
        if a.size % 2 or np.any(a <= 0) or b < 0:
            raise ValueError("quartic body needs an even number of positive a_i and b >= 0")

        def f(x):
            s = float(np.dot(x, x))
            return float(np.dot(a, x * x)) + b * s * s - 1.0

        return cls(a.size // 2, f, symmetric=True, spec={"quartic": {"a": a.tolist(), "b": b}})

    def _gauge1(self, x) -> float:
        r = float(np.linalg.norm(x))
        if r == 0.0:
            return 0.0
        u = np.asarray(x) / r
        hi = 1.0
        while self.boundary(hi * u) < 0:
            hi *= 2.0
            if hi > 1e12:
                raise ValueError("boundary function never becomes positive along a ray")
        lo = hi / 2.0
        while self.boundary(lo * u) >= 0:
            lo /= 2.0
            if lo < 1e-12:
                raise ValueError("origin is not interior to the body")
        t = brentq(lambda s: self.boundary(s * u), lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        return r / t

    def gauge(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self._gauge1(x)
        return np.array([self._gauge1(v) for v in x])

    def gauge_grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return _richardson(self._gauge1, x, 1e-3 * max(1e-3, np.linalg.norm(x)))

    def gauge_hess(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        h = _richardson(self.gauge_grad, x, 2e-2 * max(1e-3, np.linalg.norm(x)))
        return 0.5 * (h + h.T)

    def support_point(self, y, max_iter: int = 500, tol: float = 1e-13) -> np.ndarray:
        """Point of the boundary maximizing ``x . y``.

        A coarse projected ascent is polished by Newton's method on the
        Lagrange system ``F(x) = 0``, ``F'(x) = mu y``.
        """
        y = np.asarray(y, dtype=float)
        yn = y / np.linalg.norm(y)
        x = yn / self._gauge1(yn)
        step = 0.5 * self.diameter
        for _ in range(max_iter):
            g = self.gauge_grad(x)
            nrm = g / np.linalg.norm(g)
            tang = yn - np.dot(yn, nrm) * nrm
            if np.linalg.norm(tang) < 1e-4:
                break
            x_new = x + step * tang
            x_new = x_new / self._gauge1(x_new)
            if np.dot(x_new, y) < np.dot(x, y):
                step *= 0.5
                continue
            x = x_new
        else:
            raise DualGaugeNonConvergence(f"projected ascent did not converge for y={y}")
        h = 1e-3 * self.diameter
        d = x.size
        gF = _richardson(self.boundary, x, h)
        mu = float(np.dot(gF, yn))
        for _ in range(30):
            gF = _richardson(self.boundary, x, h)
            hF = _richardson(lambda z: _richardson(self.boundary, z, h), x, h)
            jac = np.zeros((d + 1, d + 1))
            jac[:d, :d], jac[:d, d], jac[d, :d] = hF, -yn, gF
            res = np.r_[gF - mu * yn, self.boundary(x)]
            delta = np.linalg.solve(jac, -res)
            x, mu = x + delta[:d], mu + delta[d]
            if np.linalg.norm(delta[:d]) < tol * self.diameter:
                return x / self._gauge1(x)
        raise DualGaugeNonConvergence(f"support point Newton polish did not converge for y={y}")

    def dual_gauge(self, y):
        y = np.asarray(y, dtype=float)
        if y.ndim == 2:
            return np.array([self.dual_gauge(v) for v in y])
        return float(np.dot(self.support_point(y), y))

    def dual_gauge_grad(self, y):
        y = np.asarray(y, dtype=float)
        if y.ndim == 2:
            return np.stack([self.dual_gauge_grad(v) for v in y])
        return self.support_point(y)

    def dual_gauge_hess(self, y):
        h = _richardson(self.dual_gauge_grad, np.asarray(y, dtype=float), 1e-3 * np.linalg.norm(y))
        return 0.5 * (h + h.T)

    def to_json(self) -> dict:
        return {"kind": "gauge-table", **(self._spec or {})}


def body_from_spec(spec: dict):
    """Body from a JSON-style dictionary (``kind`` ellipsoid or gauge-table)."""
    kind = spec.get("kind")
    if kind == "ellipsoid":
        return Ellipsoid(spec["radii"])
    if kind == "gauge-table":
        q = spec.get("quartic")
        if q is None:
            raise ValueError("gauge-table body needs a 'quartic' entry {a: [...], b: float}")
        return GaugeTableBody.quartic(q["a"], q["b"])
    raise ValueError(f"unknown body kind {kind!r}")


# Hamiltonian ----------------------------------------------------------------

def hamiltonian_alpha(body, alpha: float, x, tol: Tolerances = DEFAULT):
    """``(H_alpha(x), H_alpha'(x))`` with ``H_alpha = j^alpha``.

    Raises
    ------
    OriginSingularity
        If ``|x| < tol.x_min`` (the gradient is requested at the origin).
    """
    x = np.asarray(x, dtype=float)
    if np.linalg.norm(x) < tol.x_min:
        raise OriginSingularity("H_alpha gradient requested at the origin")
    j = float(body.gauge(x))
    return j**alpha, alpha * j ** (alpha - 1) * body.gauge_grad(x)


def hamiltonian_hessian(body, alpha: float, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    j = float(body.gauge(x))
    g = body.gauge_grad(x)
    return alpha * (alpha - 1) * j ** (alpha - 2) * np.outer(g, g) + alpha * j ** (alpha - 1) * body.gauge_hess(x)


# flows -------------------------------------------------------------------------

def _resymplectify(w: np.ndarray, J: np.ndarray, sweeps: int = 3) -> np.ndarray:
    """Newton-type correction ``W <- W (I + J E / 2)`` with ``E = W^T J W - J``."""
    for _ in range(sweeps):
        e = w.T @ J @ w - J
        if np.max(np.abs(e)) < 1e-15:
            break
        w = w @ (np.eye(len(J)) + 0.5 * J @ e)
    return w


@dataclass
class Trajectory:
    """Dense-output solution of the flow (and optionally its linearization)."""

    sol: OdeSolution
    t_end: float
    n: int
    times: np.ndarray
    max_projection: float
    resymplectified: int
    variational: bool

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = self.sol(t)
        return out[: 2 * self.n].T if t.ndim else out[: 2 * self.n]

    def fundamental(self, t) -> np.ndarray:
        if not self.variational:
            raise ValueError("trajectory was integrated without the variational equation")
        t = np.atleast_1d(np.asarray(t, dtype=float))
        d = 2 * self.n
        return self.sol(t)[d:].T.reshape(len(t), d, d)


def flow_orbit(body, alpha: float, x0, t_end: float, variational: bool = False, tol: Tolerances = DEFAULT) -> Trajectory:
    """Integrate ``y' = J H_alpha'(y)`` from ``x0`` with energy pinning.

    After every accepted DOP853 step the state is rescaled to ``y / j(y)``;
    the largest pre-projection ``|j - 1|`` is recorded.  With ``variational``
    the linearized system is integrated alongside and re-symplectified every
    ``tol.resymplectify_every`` steps.

    Raises
    ------
    EnergyDrift
        If ``|H(x0) - 1| > tol.energy`` or a step drifts by more than ``tol.drift_cap``.
    StepFailure
        If the integrator fails.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size // 2
    J = standard_j(n)
    if abs(float(body.gauge(x0)) ** alpha - 1.0) > tol.energy:
        raise EnergyDrift(f"initial point has H = {float(body.gauge(x0)) ** alpha!r}, not 1")
    d = 2 * n

    def rhs(t, z):
        y = z[:d]
        _, g = hamiltonian_alpha(body, alpha, y, tol)
        dy = J @ g
        if not variational:
            return dy
        w = z[d:].reshape(d, d)
        return np.r_[dy, (J @ hamiltonian_hessian(body, alpha, y) @ w).ravel()]

    z0 = np.r_[x0, np.eye(d).ravel()] if variational else x0.copy()
    solver = DOP853(rhs, 0.0, z0, t_end, rtol=tol.ode_rtol, atol=tol.ode_atol)
    ts, interps = [0.0], []
    max_proj, count, resym = 0.0, 0, 0
    while solver.status == "running":
        msg = solver.step()
        if solver.status == "failed":
            raise StepFailure(f"integrator failed at t={solver.t:.6g}: {msg}")
        interps.append(solver.dense_output())
        ts.append(solver.t)
        y = solver.y[:d]
        jy = float(body.gauge(y))
        drift = abs(jy - 1.0)
        if drift > tol.drift_cap:
            raise EnergyDrift(f"energy drift {drift:.3e} at t={solver.t:.6g} exceeds {tol.drift_cap:.1e}")
        max_proj = max(max_proj, drift)
        z = solver.y.copy()
        z[:d] = y / jy
        count += 1
        if variational and count % tol.resymplectify_every == 0:
            z[d:] = _resymplectify(z[d:].reshape(d, d), J).ravel()
            resym += 1
        solver.y = z
        solver.f = rhs(solver.t, z)
    log.debug("flow: %d steps, max projection %.2e, %d re-symplectifications", count, max_proj, resym)
    return Trajectory(OdeSolution(ts, interps), t_end, n, np.array(ts), max_proj, resym, variational)


# characteristics ------------------------------------------------------------

@dataclass
class ClosedCharacteristic:
    """A closed characteristic ``(tau, y)`` with its associated symplectic path."""

    tau: float
    trajectory: object
    action: float
    monodromy: SymplecticMatrix
    path: SymplecticPath = field(repr=False)
    symmetric_orbit: bool
    label: str
    alpha: float = 1.5
    method: str = "closed-form"

    def sample(self, num: int = 512) -> tuple:
        ts = np.linspace(0.0, self.tau, num, endpoint=False)
        return ts, np.asarray(self.trajectory(ts)).reshape(num, -1)

    def validate(self, body, tol: Tolerances = DEFAULT):
        """Check closure, energy, nullity and positive action."""
        ts, ys = self.sample(256)
        end = np.asarray(self.trajectory(np.array([self.tau]))).reshape(-1)
        gap = float(np.linalg.norm(end - ys[0]))
        if gap > tol.orbit * body.diameter:
            raise InvariantViolation(f"orbit does not close: gap {gap:.3e}", tag="closure", label=self.label)
        energy = float(np.max(np.abs(np.asarray(body.gauge(ys)) ** self.alpha - 1.0)))
        if energy > tol.energy * 10:
            raise InvariantViolation(f"energy error {energy:.3e}", tag="energy", label=self.label)
        if nu_omega(self.monodromy, 1.0, tol) < 1:
            raise InvariantViolation("monodromy has no eigenvalue 1", tag="nullity", label=self.label)
        if not self.action > 0:
            raise InvariantViolation("non-positive action", tag="action", label=self.label)
        return {"closure_gap": gap, "energy_error": energy}

    def to_csv(self, fh, num: int = 512):
        ts, ys = self.sample(num)
        w = csv.writer(fh)
        w.writerow(["t"] + [f"y{i + 1}" for i in range(ys.shape[1])])
        for t, y in zip(ts, ys):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in y])


def action_of_trajectory(traj, tau: float, num: int = 2048) -> float:
    """``(1/2) int_0^tau J y . y' dt`` by the periodic trapezoidal rule."""
    n = None
    ts = np.linspace(0.0, tau, num, endpoint=False)
    ys = np.asarray(traj(ts)).reshape(num, -1)
    n = ys.shape[1] // 2
    J = standard_j(n)
    k = np.fft.fftfreq(num, d=1.0 / num)
    dy = np.real(np.fft.ifft(np.fft.fft(ys, axis=0) * (2j * np.pi * k / tau)[:, None], axis=0))
    return 0.5 * float(np.mean(np.einsum("ij,ij->i", ys @ J.T, dy))) * tau


def detect_symmetric(char: ClosedCharacteristic, body, tol: Tolerances = DEFAULT, num: int = 512) -> bool:
    """``y(t) = -y(t + tau/2)`` test with the disjointness alternative.

    Raises
    ------
    SymmetryAmbiguous
        If neither the antipodal identity nor a clear separation of ``y``
        and ``-y`` holds.
    """
    if not body.symmetric:
        return False
    ts = np.linspace(0.0, char.tau, num, endpoint=False)
    ys = np.asarray(char.trajectory(ts)).reshape(num, -1)
    half = np.asarray(char.trajectory(np.mod(ts + 0.5 * char.tau, char.tau))).reshape(num, -1)
    diam = body.diameter
    if np.max(np.linalg.norm(ys + half, axis=1)) <= tol.sym * diam:
        return True
    if cdist(ys, -ys).min() > tol.sym_gap * diam:
        return False
    raise SymmetryAmbiguous(f"orbit {char.label}: neither antipodal nor separated from its negation")


def _plane_rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def ellipsoid_monodromy_func(radii, j: int, alpha: float):
    """Closed-form associated path of the ``j``-th planar characteristic."""
    r = np.asarray(radii, dtype=float)
    n = r.size
    c = alpha * (alpha - 2.0) / r[j] ** 2

    def func(ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        out = np.zeros((ts.size, 2 * n, 2 * n))
        for k in range(n):
            th = alpha * ts / r[k] ** 2
            cs, sn = np.cos(th), np.sin(th)
            if k == j:
                # R(th) @ [[1, 0], [c t, 1]]
                blk = [[cs - sn * c * ts, -sn], [sn + cs * c * ts, cs]]
            else:
                blk = [[cs, -sn], [sn, cs]]
            out[:, k, k], out[:, k, n + k] = blk[0]
            out[:, n + k, k], out[:, n + k, n + k] = blk[1]
        return out

    return func


def ellipsoid_characteristics(radii, alpha: float = 1.5, tol: Tolerances = DEFAULT) -> list:
    """The ``n`` planar circular characteristics of ``E(r_1, ..., r_n)``.

    Raises
    ------
    DegenerateRadii
        If two radii are closer than a relative ``1e-6``; then the planar
        circles are not the only prime characteristics.
    """
    r = np.asarray(radii, dtype=float)
    n = r.size
    s = np.sort(r)
    if n > 1 and np.min(np.diff(s) / s[1:]) < 1e-6:
        raise DegenerateRadii("radii must be pairwise distinct (relative gap >= 1e-6)")
    out = []
    for j in range(n):
        omega = alpha / r[j] ** 2
        tau = 2.0 * np.pi * r[j] ** 2 / alpha

        def traj(t, j=j, omega=omega):
            t = np.asarray(t, dtype=float)
            y = np.zeros(t.shape + (2 * n,))
            y[..., j] = r[j] * np.cos(omega * t)
            y[..., n + j] = r[j] * np.sin(omega * t)
            return y

        func = ellipsoid_monodromy_func(r, j, alpha)
        path = SymplecticPath(tau, func=func, grid=np.linspace(0.0, tau, 129), tol=tol)
        out.append(
            ClosedCharacteristic(
                tau=tau,
                trajectory=traj,
                action=float(np.pi * r[j] ** 2),
                monodromy=make_symplectic(func(np.array([tau]))[0], tol.sympl),
                path=path,
                symmetric_orbit=True,
                label=f"y{j + 1}",
                alpha=alpha,
            )
        )
    return out


def characteristic_from_orbit(body, alpha: float, x0, tau: float, label: str, tol: Tolerances = DEFAULT,
                              refine: bool = True) -> ClosedCharacteristic:
    """Build a characteristic from an approximate periodic point by integration.

    With ``refine`` the pair ``(x0, tau)`` is first corrected by shooting:
    ``phi_tau(x0) = x0`` with ``x0`` kept on the surface and pinned by a phase
    condition orthogonal to the flow.
    """
    x0 = np.asarray(x0, dtype=float)
    x0 = x0 / float(body.gauge(x0))
    if refine:
        x0, tau = _shoot(body, alpha, x0, tau, tol)
    traj = flow_orbit(body, alpha, x0, tau, variational=True, tol=tol)
    d = x0.size
    J = standard_j(d // 2)
    w_end = _resymplectify(traj.fundamental(tau)[0], J)

    def func(ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        w = traj.fundamental(np.clip(ts, 0.0, tau))
        w[ts == 0.0] = np.eye(d)
        w[ts == tau] = w_end
        return w

    grid = traj.times.copy()
    path = SymplecticPath(tau, func=func, grid=grid, tol=tol)
    char = ClosedCharacteristic(
        tau=tau,
        trajectory=traj,
        action=action_of_trajectory(traj, tau),
        monodromy=make_symplectic(w_end, tol.sympl),
        path=path,
        symmetric_orbit=False,
        label=label,
        alpha=alpha,
        method="integrated",
    )
    char.symmetric_orbit = detect_symmetric(char, body, tol)
    return char


def _shoot(body, alpha, x0, tau, tol: Tolerances):
    d = x0.size
    J = standard_j(d // 2)
    v0 = J @ hamiltonian_alpha(body, alpha, x0, tol)[1]
    v0 = v0 / np.linalg.norm(v0)

    def resid(p):
        x = x0 + p[:d]
        x = x / float(body.gauge(x))
        end = flow_orbit(body, alpha, x, p[d], tol=tol)(np.array([p[d]]))[0]
        return np.r_[end - x, np.dot(x - x0, v0)]

    p0 = np.r_[np.zeros(d), tau]
    # tau = 0 closes every point trivially; keep the period near its guess
    lo = np.r_[np.full(d, -np.inf), 0.5 * tau]
    hi = np.r_[np.full(d, np.inf), 2.0 * tau]
    sol = least_squares(resid, p0, bounds=(lo, hi), xtol=1e-14, ftol=1e-14, gtol=1e-14, diff_step=1e-7, max_nfev=60)
    x = x0 + sol.x[:d]
    return x / float(body.gauge(x)), float(sol.x[d])
