"""Clarke-Ekeland dual action on mean-zero loops.

Loops are band-limited, ``u(t) = sum_{k=1..K} 2 Re(c_k exp(2 pi i k t))``.
Internally a loop is a real vector ``a`` of coordinates in the
L2-orthonormal basis ``sqrt(2) cos(2 pi k t) e_i``, ``sqrt(2) sin(2 pi k t) e_i``,
so the gradient of the discretized functional is the L2 gradient and its
Hessian matrix is the formal Hessian ``Q`` restricted to the band.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .config import DEFAULT, Tolerances
from .errors import DualGaugeNonConvergence, MorseUnstable, NoConvergence, PSViolationSuspected
from .hypersurface import ClosedCharacteristic, Ellipsoid, action_of_trajectory, characteristic_from_orbit
from .symplectic import standard_j

log = logging.getLogger(__name__)


# Loop representation --------------------------------------------------------

@dataclass(frozen=True)
class Loop:
    """Mean-zero band-limited loop of period 1.

    ``coefficients[k-1]`` is ``c_k`` for ``k = 1..K``; ``c_{-k}`` is its
    conjugate, and there is no constant term.
    """

    coefficients: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.coefficients.shape[0]

    @property
    def dim(self) -> int:
        return self.coefficients.shape[1]

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = np.arange(1, self.n_modes + 1)
        e = np.exp(2j * np.pi * np.outer(t, k))
        return 2.0 * np.real(e @ self.coefficients)

    def samples(self, num: int) -> np.ndarray:
        """Values on ``t_j = j / num`` (``num > 2K``) via the inverse real FFT."""
        if num <= 2 * self.n_modes:
            raise ValueError("grid too coarse for the band")
        spec = np.zeros((num // 2 + 1, self.dim), dtype=complex)
        spec[1 : self.n_modes + 1] = num * self.coefficients
        return np.fft.irfft(spec, n=num, axis=0)

    def to_basis(self) -> np.ndarray:
        c = self.coefficients
        return np.sqrt(2.0) * np.concatenate([c.real, -c.imag]).ravel()

    @classmethod
    def from_basis(cls, a, n_modes: int, dim: int) -> "Loop":
        a = np.asarray(a, dtype=float).reshape(2 * n_modes, dim)
        return cls((a[:n_modes] - 1j * a[n_modes:]) / np.sqrt(2.0))

    @classmethod
    def from_samples(cls, values: np.ndarray, n_modes: int) -> "Loop":
        """Project uniform samples of a periodic function onto the band, dropping the mean."""
        values = np.asarray(values, dtype=float)
        spec = np.fft.rfft(values, axis=0) / values.shape[0]
        return cls(spec[1 : n_modes + 1].copy())

    def resized(self, n_modes: int) -> "Loop":
        c = np.zeros((n_modes, self.dim), dtype=complex)
        k = min(n_modes, self.n_modes)
        c[:k] = self.coefficients[:k]
        return Loop(c)

    def shifted(self, theta: float) -> "Loop":
        k = np.arange(1, self.n_modes + 1)
        return Loop(self.coefficients * np.exp(2j * np.pi * k * theta)[:, None])

    def to_json(self) -> dict:
        return {"re": self.coefficients.real.tolist(), "im": self.coefficients.imag.tolist()}


def primitive_zero_mean(u: Loop) -> Loop:
    """``Mu`` with ``(Mu)' = u`` and zero mean: ``c_k / (2 pi i k)``."""
    k = np.arange(1, u.n_modes + 1)
    return Loop(u.coefficients / (2j * np.pi * k)[:, None])


# Fenchel conjugate --------------------------------------------------------

def _legendre_constant(alpha: float) -> float:
    beta = alpha / (alpha - 1.0)
    return (alpha - 1.0) * alpha ** (-beta)


def fenchel_conjugate(body, alpha: float, y):
    """``(H*(y), H*'(y))`` for ``H = j^alpha``; rows of ``y`` are evaluated independently.

    ``H*(y) = (alpha - 1) alpha^(-beta) j_dual(y)^beta`` with
    ``beta = alpha / (alpha - 1)`` and ``j_dual`` the support function.
    """
    y = np.asarray(y, dtype=float)
    beta = alpha / (alpha - 1.0)
    c = _legendre_constant(alpha)
    g = np.asarray(body.dual_gauge(y))
    val = c * g**beta
    # H* is C^1 at the origin with zero gradient
    zero = g <= 1e-300
    if np.any(zero):
        safe = np.where(zero[..., None], 1.0, y)
        dg = np.where(zero[..., None], 0.0, np.asarray(body.dual_gauge_grad(safe)))
    else:
        dg = np.asarray(body.dual_gauge_grad(y))
    grad = c * beta * (g ** (beta - 1.0))[..., None] * dg
    return val, grad


def fenchel_hessian(body, alpha: float, y) -> np.ndarray:
    """``H*''(y)`` for a stack of covectors (shape ``(N, 2n)`` in, ``(N, 2n, 2n)`` out)."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    beta = alpha / (alpha - 1.0)
    c = _legendre_constant(alpha)
    if isinstance(body, Ellipsoid):
        d = 1.0 / body._a
        g = body.dual_gauge(y)
        gs = np.where(g > 0, g, 1.0)
        dy = y * d
        eye = np.eye(y.shape[1])
        out = c * beta * (
            (gs ** (beta - 2.0))[:, None, None] * (d * eye)[None]
            + (beta - 2.0) * (gs ** (beta - 4.0))[:, None, None] * np.einsum("ti,tj->tij", dy, dy)
        )
        out[g <= 0] = 0.0
        return out
    out = []
    for v in y:
        g = body.dual_gauge(v)
        dg = body.dual_gauge_grad(v)
        out.append(c * beta * ((beta - 1.0) * g ** (beta - 2.0) * np.outer(dg, dg) + g ** (beta - 1.0) * body.dual_gauge_hess(v)))
    return np.stack(out)


# Discretized functional ----------------------------------------------------

class DualProblem:
    """The dual action restricted to ``K`` modes with an ``N``-point quadrature."""

    def __init__(self, body, alpha: float, n_modes: int, grid: int | None = None):
        if not 1.0 < alpha < 2.0:
            raise ValueError("alpha must lie in (1, 2)")
        self.body, self.alpha, self.K = body, alpha, n_modes
        self.d = 2 * body.n
        self.N = grid or max(8 * n_modes, 64)
        t = np.arange(self.N) / self.N
        k = np.arange(1, n_modes + 1)
        arg = 2 * np.pi * np.outer(t, k)
        s2 = np.sqrt(2.0)
        self.F = np.hstack([s2 * np.cos(arg), s2 * np.sin(arg)])
        self.G = np.hstack([s2 * np.sin(arg) / (2 * np.pi * k), -s2 * np.cos(arg) / (2 * np.pi * k)])
        self.J = standard_j(body.n)

    @property
    def size(self) -> int:
        return 2 * self.K * self.d

    def _fields(self, a):
        A = np.asarray(a, dtype=float).reshape(2 * self.K, self.d)
        return self.F @ A, self.G @ A

    def phi(self, a) -> float:
        u, mu = self._fields(a)
        ju = u @ self.J.T
        h, _ = fenchel_conjugate(self.body, self.alpha, -ju)
        return float(np.mean(0.5 * np.einsum("ti,ti->t", ju, mu) + h))

    def grad(self, a) -> np.ndarray:
        u, mu = self._fields(a)
        ju = u @ self.J.T
        _, dh = fenchel_conjugate(self.body, self.alpha, -ju)
        g = -mu @ self.J.T + dh @ self.J.T
        return (self.F.T @ g / self.N).ravel()

    def phi_and_grad(self, a):
        u, mu = self._fields(a)
        ju = u @ self.J.T
        h, dh = fenchel_conjugate(self.body, self.alpha, -ju)
        val = float(np.mean(0.5 * np.einsum("ti,ti->t", ju, mu) + h))
        g = -mu @ self.J.T + dh @ self.J.T
        return val, (self.F.T @ g / self.N).ravel()

    def hessian(self, a) -> np.ndarray:
        """Matrix of ``Q(v, v) = int J v . M v + H*''(-J u) J v . J v`` on the band."""
        u, _ = self._fields(a)
        hs = fenchel_hessian(self.body, self.alpha, -u @ self.J.T)
        s = np.einsum("ai,tab,bj->tij", self.J, hs, self.J)
        w = self.F[:, :, None, None] * s[:, None, :, :]
        q2 = np.tensordot(self.F, w, axes=(0, 0)).transpose(1, 2, 0, 3) / self.N
        fg = self.F.T @ self.G / self.N
        q1 = np.einsum("mp,ji->mipj", fg, self.J)
        n = self.size
        q = (q1 + q2).reshape(n, n)
        return 0.5 * (q + q.T)


def phi(u: Loop, body, alpha: float, grid: int | None = None) -> float:
    """Dual action of ``u`` by quadrature on a uniform grid of at least ``8K`` points."""
    prob = DualProblem(body, alpha, u.n_modes, grid)
    return prob.phi(u.to_basis())


def gradient(u: Loop, body, alpha: float) -> Loop:
    """L2 gradient of the dual action, projected onto the band."""
    prob = DualProblem(body, alpha, u.n_modes)
    return Loop.from_basis(prob.grad(u.to_basis()), u.n_modes, u.dim)


def hessian(u: Loop, body, alpha: float) -> np.ndarray:
    return DualProblem(body, alpha, u.n_modes).hessian(u.to_basis())


def phi_of_action(action: float, alpha: float) -> float:
    """Critical value attached to a characteristic of the given action."""
    return -(1.0 - alpha / 2.0) * (2.0 * action / alpha) ** (alpha / (alpha - 2.0))


# Recovery -------------------------------------------------------------------

@dataclass
class Recovery:
    """Fixed-period solution ``x = H*'(-J u)`` and the surface orbit behind it."""

    x: np.ndarray
    xi: np.ndarray
    scale: float
    tau_total: float
    multiplicity: int
    tau: float


def _multiplicity(u: Loop, rel: float = 1e-7) -> int:
    amp = np.linalg.norm(u.coefficients, axis=1)
    sig = np.flatnonzero(amp > rel * amp.max()) + 1
    return int(np.gcd.reduce(sig)) if sig.size else 1


def recover(u: Loop, body, alpha: float, grid: int | None = None) -> Recovery:
    """Recover the closed characteristic behind a critical loop.

    ``x = H*'(-J u)`` solves the period-one problem and ``Mu - x`` is the
    constant ``xi``.  On the surface the orbit is ``y = x / lambda`` with
    ``lambda = j(x)`` and total period ``lambda^(alpha - 2)``; dividing by
    the number of times the loop winds gives the prime period.
    """
    num = grid or max(8 * u.n_modes, 64)
    J = standard_j(u.dim // 2)
    us = u.samples(num)
    _, x = fenchel_conjugate(body, alpha, -us @ J.T)
    mu = primitive_zero_mean(u).samples(num)
    lam = float(np.mean(np.asarray(body.gauge(x))))
    if not lam > 0:
        raise NoConvergence("loop recovers to the origin")
    tau_total = lam ** (alpha - 2.0)
    mult = _multiplicity(u)
    return Recovery(x, np.mean(mu - x, axis=0), lam, tau_total, mult, tau_total / mult)


@dataclass
class CriticalPoint:
    loop: Loop
    phi_value: float
    morse_index: int | None = None
    nullity: int | None = None
    grad_norm: float = 0.0
    multiplicity: int = 1
    recovered_orbit: ClosedCharacteristic | None = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "phi": self.phi_value,
            "morse_index": self.morse_index,
            "nullity": self.nullity,
            "grad_norm": self.grad_norm,
            "multiplicity": self.multiplicity,
            "action": None if self.recovered_orbit is None else self.recovered_orbit.action,
            "label": None if self.recovered_orbit is None else self.recovered_orbit.label,
            "symmetric": None if self.recovered_orbit is None else self.recovered_orbit.symmetric_orbit,
        }


# Morse data ------------------------------------------------------------------

def morse_counts(u: Loop, body, alpha: float, eig_tol: float) -> tuple:
    """``(i(u), nu(u))`` from the truncated Hessian at the loop's own band."""
    q = hessian(u, body, alpha)
    ev = np.linalg.eigvalsh(q)
    scale = max(1.0, float(np.max(np.abs(ev))))
    thr = eig_tol * scale
    return int(np.sum(ev < -thr)), int(np.sum(np.abs(ev) <= thr)), ev


def morse_data(u: Loop, body, alpha: float, tol: Tolerances = DEFAULT, k_max: int = 512) -> tuple:
    """``(i(u), nu(u))`` stabilized across two consecutive truncations ``K`` and ``2K``.

    Raises
    ------
    MorseUnstable
        If the counts still change when ``K`` reaches ``k_max``.
    """
    k = u.n_modes
    prev = morse_counts(u, body, alpha, tol.eig_tol)[:2]
    while 2 * k <= k_max:
        k *= 2
        cur = morse_counts(u.resized(k), body, alpha, tol.eig_tol)[:2]
        if cur == prev:
            return cur
        prev = cur
    raise MorseUnstable(f"Morse counts not stable up to K={k_max}: last {prev}")


# Characteristic <-> loop -----------------------------------------------------

def loop_from_characteristic(char: ClosedCharacteristic, m: int, n_modes: int, grid: int | None = None) -> Loop:
    """Critical loop of the ``m``-th iterate: ``u = x'`` for ``x(t) = lam y(m tau t)``.

    The scale is ``lam = (m tau)^(1/(alpha - 2))``, which puts ``x`` on
    ``H = lam^alpha`` and makes it 1-periodic.
    """
    num = grid or max(8 * n_modes, 256)
    alpha = char.alpha
    lam = (m * char.tau) ** (1.0 / (alpha - 2.0))
    t = np.arange(num) / num
    ys = np.asarray(char.trajectory(np.mod(m * char.tau * t, char.tau))).reshape(num, -1)
    x = Loop.from_samples(lam * ys, n_modes)
    k = np.arange(1, n_modes + 1)
    return Loop(x.coefficients * (2j * np.pi * k)[:, None])


def action(char: ClosedCharacteristic, num: int = 2048) -> float:
    """``(1/2) int J y . y'`` over one period."""
    return action_of_trajectory(char.trajectory, char.tau, num)


# Solver -----------------------------------------------------------------------

def _random_start(rng, n_modes: int, d: int, noise: float = 1e-3) -> Loop:
    c = np.zeros((n_modes, d), dtype=complex)
    c[0] = rng.normal(size=d) + 1j * rng.normal(size=d)
    if n_modes > 1:
        c[1:4] = noise * (rng.normal(size=(min(3, n_modes - 1), d)) + 1j * rng.normal(size=(min(3, n_modes - 1), d)))
    return Loop(c)


def _scale_to_ray_minimum(u: Loop, prob: DualProblem) -> Loop:
    """Rescale (and reverse time if needed) to the minimum of ``s -> Phi(s u)``."""
    a = u.to_basis()
    uu, mu = prob._fields(a)
    q = float(np.mean(0.5 * np.einsum("ti,ti->t", uu @ prob.J.T, mu)))
    if q > 0:
        u = Loop(np.conj(u.coefficients))
        q = -q
    a = u.to_basis()
    p = prob.phi(a) - q
    beta = prob.alpha / (prob.alpha - 1.0)
    s = (-2.0 * q / (beta * p)) ** (1.0 / (beta - 2.0))
    return Loop(s * u.coefficients)


def _descend(prob: DualProblem, a, g_tol: float, max_iters: int):
    """Nesterov-accelerated gradient descent with backtracking and restarts."""
    x = y = np.asarray(a, dtype=float)
    fx, gx = prob.phi_and_grad(x)
    step, t_mom = 1.0, 1.0
    for it in range(max_iters):
        fy, gy = prob.phi_and_grad(y)
        if np.linalg.norm(gy) <= g_tol:
            return y, fy, np.linalg.norm(gy), it
        while True:
            xn = y - step * gy
            fn = prob.phi(xn)
            if fn <= fy - 0.5 * step * gy @ gy:
                break
            step *= 0.5
            if step < 1e-16:
                return y, fy, np.linalg.norm(gy), it
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t_mom * t_mom))
        if fn > fx:
            y, t_mom = x, 1.0
            continue
        y = xn + ((t_mom - 1) / t_new) * (xn - x)
        x, fx, t_mom = xn, fn, t_new
        step *= 1.5
    fx, gx = prob.phi_and_grad(x)
    return x, fx, np.linalg.norm(gx), max_iters


def _newton(prob: DualProblem, a, g_tol: float, max_iters: int):
    """Levenberg-Marquardt on ``grad Phi = 0`` with the Hessian as Jacobian; reaches saddles."""
    res = least_squares(
        prob.grad, a, jac=prob.hessian, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_iters
    )
    f, g = prob.phi_and_grad(res.x)
    return res.x, f, float(np.linalg.norm(g))


def _same_orbit(u: Loop, v: Loop, symmetric: bool, dup_tol: float, shifts: int = 256) -> bool:
    """Minimal L2 distance over phase shifts (and sign, on symmetric bodies)."""
    k = np.arange(1, u.n_modes + 1)
    th = np.arange(shifts) / shifts
    rot = np.exp(2j * np.pi * np.outer(th, k))
    unit = lambda c: c / np.sqrt(2 * np.sum(np.abs(c) ** 2))
    u = Loop(unit(u.coefficients))
    cands = [unit(v.coefficients)] + ([-unit(v.coefficients)] if symmetric else [])
    nrm = 1.0
    for c in cands:
        diff = u.coefficients[None] - rot[:, :, None] * c[None]
        dist = np.sqrt(2 * np.sum(np.abs(diff) ** 2, axis=(1, 2)))
        i = int(np.argmin(dist))
        # local refinement of the best shift by golden search
        lo, hi = th[i] - 1 / shifts, th[i] + 1 / shifts
        f = lambda s: np.sqrt(2 * np.sum(np.abs(u.coefficients - np.exp(2j * np.pi * k * s)[:, None] * c) ** 2))
        for _ in range(40):
            m1, m2 = lo + 0.382 * (hi - lo), lo + 0.618 * (hi - lo)
            if f(m1) < f(m2):
                hi = m2
            else:
                lo = m1
        if f(0.5 * (lo + hi)) <= dup_tol * nrm:
            return True
    return False


@dataclass
class SolverBudget:
    restarts: int = 32
    n_modes: int = 64
    max_iters: int = 400
    g_tol: float = 1e-8
    seed: int = 0


def find_critical_points(body, alpha: float, budget: SolverBudget | None = None, tol: Tolerances = DEFAULT,
                         with_morse: bool = True) -> list:
    """Multistart search for critical points of the dual action.

    The first start runs accelerated gradient descent (it finds the
    minimum); the remaining starts run Levenberg-Marquardt on the gradient
    from random single-mode loops scaled to their ray minimum, which also
    converges to saddles.  Converged loops are reduced to prime orbits,
    deduplicated by action and phase-shifted distance, and recovered to
    closed characteristics on the surface.
    """
    budget = budget or SolverBudget()
    rng = np.random.default_rng(budget.seed)
    prob = DualProblem(body, alpha, budget.n_modes)
    d = 2 * body.n
    raw = []
    for r in range(budget.restarts):
        u0 = _scale_to_ray_minimum(_random_start(rng, budget.n_modes, d), prob)
        try:
            if r == 0:
                a, f, gn, _ = _descend(prob, u0.to_basis(), budget.g_tol, budget.max_iters * 10)
                if gn > budget.g_tol:
                    a, f, gn = _newton(prob, a, budget.g_tol, budget.max_iters)
            else:
                a, f, gn = _newton(prob, u0.to_basis(), budget.g_tol, budget.max_iters)
        except (DualGaugeNonConvergence, FloatingPointError, np.linalg.LinAlgError) as exc:
            log.info("restart %d failed: %s", r, exc)
            continue
        if f < -1e12:
            raise PSViolationSuspected(f"restart {r}: Phi unbounded below ({f:.3e})")
        if gn > budget.g_tol or not f < 0:
            log.info("restart %d did not converge: |grad| = %.2e, Phi = %.3e", r, gn, f)
            continue
        u = Loop.from_basis(a, budget.n_modes, d)
        amp = np.linalg.norm(u.coefficients, axis=1)
        if amp.max() < 1e-10:
            log.info("restart %d converged to the trivial loop", r)
            continue
        if np.sum(amp[budget.n_modes // 2 :] ** 2) > 1e-16 * np.sum(amp**2):
            log.info("restart %d: critical loop not resolved by the band, dropped", r)
            continue
        raw.append((f, r, u, gn))
    if not raw:
        raise NoConvergence("no restart converged to a nonzero critical point")

    raw.sort(key=lambda item: (item[0], item[1]))
    found: list[CriticalPoint] = []
    for f, r, u, gn in raw:
        rec = recover(u, body, alpha)
        mult = rec.multiplicity
        prime_action = _action_from_phi(f, alpha) / mult
        dup = False
        for cp in found:
            a0 = cp.diagnostics["prime_action"]
            if abs(prime_action - a0) <= 1e-6 * a0:
                prime_loop = _prime_loop(u, mult)
                if _same_orbit(prime_loop, cp.diagnostics["prime_loop"], body.symmetric, tol.dup_tol):
                    dup = True
                    break
        if dup:
            continue
        found.append(
            CriticalPoint(
                loop=u,
                phi_value=f,
                grad_norm=gn,
                multiplicity=mult,
                diagnostics={"restart": r, "prime_action": prime_action, "prime_loop": _prime_loop(u, mult), "rec": rec},
            )
        )

    found.sort(key=lambda cp: cp.diagnostics["prime_action"])
    out = []
    for cp in found:
        rec = cp.diagnostics.pop("rec")
        x0 = rec.x[0] / rec.scale
        label = f"u{len(out) + 1}"
        try:
            char = characteristic_from_orbit(body, alpha, x0, rec.tau, label, tol)
            char.validate(body, tol)
        except Exception as exc:  # a loop that does not recover to a closed orbit is not kept
            log.info("restart %d: recovery failed: %s", cp.diagnostics["restart"], exc)
            continue
        cp.recovered_orbit = char
        if with_morse:
            prime_u = loop_from_characteristic(char, 1, budget.n_modes)
            cp.morse_index, cp.nullity = morse_data(prime_u, body, alpha, tol)
        out.append(cp)
    return out


def _action_from_phi(f: float, alpha: float) -> float:
    """Invert ``Phi = -(1 - alpha/2) (2A/alpha)^(alpha/(alpha-2))``."""
    return 0.5 * alpha * (-f / (1.0 - alpha / 2.0)) ** ((alpha - 2.0) / alpha)


def _prime_loop(u: Loop, mult: int) -> Loop:
    """Loop of the prime orbit underlying an ``mult``-fold covered loop, rescaled to its own critical level."""
    if mult == 1:
        return u
    return Loop(u.coefficients[mult - 1 :: mult]).resized(u.n_modes)
