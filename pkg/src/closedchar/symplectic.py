"""Symplectic linear algebra on Sp(2n).

Coordinates are ordered ``(q_1, ..., q_n, p_1, ..., p_n)`` and the standard
structure matrix is ``J = [[0, -I], [I, 0]]``.  The diamond product interleaves
blocks so that ``diamond`` of 2x2 matrices acts plane by plane on
``(q_k, p_k)``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.linalg import expm, null_space, schur

from .config import DEFAULT, Tolerances
from .errors import DecompositionAmbiguity, SpectralAmbiguity, SymplecticViolation


def standard_j(n: int) -> np.ndarray:
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = -np.eye(n)
    J[n:, :n] = np.eye(n)
    return J


def symplectic_residual(m: np.ndarray) -> float:
    """Max-norm of ``M^T J M - J``, scaled by ``max(1, |M|_max^2)``."""
    m = np.asarray(m, dtype=float)
    J = standard_j(m.shape[0] // 2)
    scale = max(1.0, float(np.max(np.abs(m))) ** 2)
    return float(np.max(np.abs(m.T @ J @ m - J))) / scale


@dataclass(frozen=True, eq=False)
class SymplecticMatrix:
    """A validated element of Sp(2n); converts to ndarray via ``np.asarray``."""

    n: int
    entries: np.ndarray
    residual: float = 0.0

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.entries
        return self.entries.astype(dtype)

    @property
    def dim(self) -> int:
        return 2 * self.n

    def __matmul__(self, other):
        return make_symplectic(self.entries @ np.asarray(other))

    def __pow__(self, k: int):
        return make_symplectic(np.linalg.matrix_power(self.entries, k))

    def __eq__(self, other):
        return isinstance(other, SymplecticMatrix) and np.array_equal(
            self.entries, other.entries
        )

    def __hash__(self):
        return hash((self.n, self.entries.tobytes()))

    def to_json(self) -> dict:
        return {"n": self.n, "rows": self.entries.tolist()}

    @classmethod
    def from_json(cls, obj, tol: float = DEFAULT.sympl) -> "SymplecticMatrix":
        if isinstance(obj, str):
            obj = json.loads(obj)
        m = make_symplectic(np.array(obj["rows"], dtype=float), tol)
        if m.n != obj["n"]:
            raise ValueError(f"declared n={obj['n']} but rows give n={m.n}")
        return m


def make_symplectic(raw, tol: float = DEFAULT.sympl) -> SymplecticMatrix:
    """Validate ``raw`` as a symplectic matrix.

    Raises
    ------
    ValueError
        If ``raw`` is not square of even size.
    SymplecticViolation
        If the scaled residual of ``M^T J M = J`` exceeds ``tol`` or the
        determinant is not close to +1.
    """
    m = np.array(raw, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] % 2:
        raise ValueError(f"expected a square matrix of even size, got shape {m.shape}")
    res = symplectic_residual(m)
    if not res <= tol:
        raise SymplecticViolation(f"symplectic residual {res:.3e} exceeds {tol:.1e}")
    det = np.linalg.det(m)
    if not abs(det - 1.0) <= max(1e-6, 1e3 * res * max(1.0, np.abs(m).max()) ** m.shape[0]):
        raise SymplecticViolation(f"determinant {det!r} is not +1")
    m.setflags(write=False)
    return SymplecticMatrix(m.shape[0] // 2, m, res)


def identity(n: int) -> SymplecticMatrix:
    return make_symplectic(np.eye(2 * n))


def diamond(*mats) -> SymplecticMatrix:
    """Diamond product: blocks of each factor are interleaved in ``(q, p)`` order."""
    arrs = [np.asarray(m, dtype=float) for m in mats]
    if not arrs:
        raise ValueError("diamond needs at least one factor")
    halves = [a.shape[0] // 2 for a in arrs]
    n = sum(halves)
    out = np.zeros((2 * n, 2 * n))
    off = 0
    for a, k in zip(arrs, halves):
        q = slice(off, off + k)
        p = slice(n + off, n + off + k)
        out[q, q] = a[:k, :k]
        out[q, p] = a[:k, k:]
        out[p, q] = a[k:, :k]
        out[p, p] = a[k:, k:]
        off += k
    return make_symplectic(out)


def diamond_power(m, k: int) -> SymplecticMatrix:
    return diamond(*([m] * k))


# basic normal forms ---------------------------------------------------------

def hyperbolic_d(lam: float) -> SymplecticMatrix:
    if lam not in (2, -2, 2.0, -2.0):
        raise ValueError("D(lambda) is defined for lambda = +-2")
    return make_symplectic([[lam, 0.0], [0.0, 1.0 / lam]])


def n1(lam: float, b: float) -> SymplecticMatrix:
    if lam not in (1, -1) or b not in (-1, 0, 1):
        raise ValueError("N1(lambda, b) needs lambda = +-1 and b in {-1, 0, 1}")
    return make_symplectic([[lam, b], [0.0, lam]])


def rotation(theta: float) -> SymplecticMatrix:
    c, s = np.cos(theta), np.sin(theta)
    return make_symplectic([[c, -s], [s, c]])


def n2(theta: float, b) -> SymplecticMatrix:
    """``[[R(theta), b], [0, R(theta)]]``; ``b`` must make the block symplectic."""
    b = np.asarray(b, dtype=float)
    if b.shape != (2, 2) or b[0, 1] == b[1, 0]:
        raise ValueError("N2 needs a 2x2 b with b_2 != b_3")
    r = np.asarray(rotation(theta))
    return make_symplectic(np.block([[r, b], [np.zeros((2, 2)), r]]))


def random_symplectic(n: int, rng, scale: float = 1.0) -> SymplecticMatrix:
    """exp(J S) for a random symmetric ``S``; a test and sampling helper."""
    a = rng.normal(size=(2 * n, 2 * n)) * scale
    return make_symplectic(expm(standard_j(n) @ (a + a.T) / 2))


# spectrum ---------------------------------------------------------------

@dataclass(frozen=True)
class UnitEigen:
    omega: complex
    alg_mult: int
    nu: int

    @property
    def angle(self) -> float:
        """Argument in [0, 2*pi)."""
        return float(np.mod(np.angle(self.omega), 2 * np.pi))


@dataclass(frozen=True)
class UnitSpectrum:
    entries: tuple
    off_circle_count: int
    off_circle: tuple = ()

    def multiplicity(self, omega: complex) -> int:
        for e in self.entries:
            if abs(e.omega - omega) < 1e-9:
                return e.alg_mult
        return 0

    def nu(self, omega: complex) -> int:
        for e in self.entries:
            if abs(e.omega - omega) < 1e-9:
                return e.nu
        return 0


def nu_omega(m, omega: complex, tol: Tolerances = DEFAULT) -> int:
    """Numerical ``dim_C ker(M - omega I)`` via singular values.

    The count is capped by the number of eigenvalues near ``omega``; on large
    iterates the relative rank threshold alone would mistake an O(1) singular
    value for a kernel direction. A Jordan block splits its eigenvalue by the
    square root of the entry error, so a wider radius ``sqrt(tol.rank * |M|)``
    (at most 0.1) is accepted when the cluster it catches is centred on
    ``omega``; otherwise the radius is ``tol.cluster``.
    """
    a = np.asarray(m, dtype=complex)
    s = np.linalg.svd(a - omega * np.eye(a.shape[0]), compute_uv=False)
    eig = np.linalg.eigvals(a)
    dist = np.abs(eig - omega)
    near = int(np.sum(dist <= tol.cluster))
    wide = min(0.1, np.sqrt(tol.rank * max(1.0, s[0])))
    if wide > tol.cluster:
        ev = eig[dist <= wide]
        if ev.size and abs(ev.mean() - omega) <= tol.cluster:
            near = ev.size
    return min(near, int(np.sum(s <= tol.rank * max(1.0, s[0]))))


def _clusters(values: np.ndarray, radius: float):
    if len(values) == 1:
        return [np.array([0])]
    pts = np.column_stack([values.real, values.imag])
    labels = fcluster(linkage(pts, method="single"), t=radius, criterion="distance")
    return [np.flatnonzero(labels == lab) for lab in np.unique(labels)]


def _eigen_groups(m: np.ndarray, tol: Tolerances):
    """Cluster eigenvalues; return list of (centroid, members, on_circle)."""
    lam = np.linalg.eigvals(m)
    groups = []
    for idx in _clusters(lam, tol.cluster):
        c = complex(np.mean(lam[idx]))
        on = abs(abs(c) - 1.0) <= tol.circle
        if abs(c - 1) <= tol.cluster:
            c = 1.0 + 0j
        elif abs(c + 1) <= tol.cluster:
            c = -1.0 + 0j
        elif on:
            c = c / abs(c)
        groups.append((c, lam[idx], on))
    return groups


def unit_circle_spectrum(m, tol: Tolerances = DEFAULT) -> UnitSpectrum:
    """Eigenvalues of ``M`` on the unit circle with algebraic and geometric multiplicities.

    Eigenvalues are clustered with radius ``tol.cluster`` (a split Jordan block
    is one cluster); a cluster is on the circle when the modulus of its
    centroid is within ``tol.circle`` of 1.  Off-circle clusters must have an
    off-circle reciprocal partner and circle clusters a conjugate partner,
    otherwise the spectrum is rejected as ambiguous.
    """
    a = np.asarray(m, dtype=float)
    groups = _eigen_groups(a, tol)
    on = [g for g in groups if g[2]]
    off = [g for g in groups if not g[2]]

    for c, members, _ in off:
        partner = 1.0 / np.conj(c)
        match = [g for g in groups if abs(g[0] - partner) <= max(tol.cluster, 1e-6 * abs(partner))]
        if not match or match[0][2] or len(match[0][1]) != len(members):
            raise SpectralAmbiguity(
                f"eigenvalue cluster at {c:.6g} has no matching off-circle partner at {partner:.6g}"
            )

    entries = []
    seen = set()
    for i, (c, members, _) in enumerate(on):
        if i in seen:
            continue
        if c.imag == 0.0:
            w = c
            k = nu_omega(a, w, tol)
            if k < 1:
                raise SpectralAmbiguity(f"cluster at {w.real:+.0f} has no numerical kernel")
            entries.append(UnitEigen(w, len(members), k))
            continue
        j = next(
            (j for j, g in enumerate(on) if j not in seen and j != i and abs(g[0] - np.conj(c)) <= tol.cluster),
            None,
        )
        if j is None or len(on[j][1]) != len(members):
            raise SpectralAmbiguity(f"circle eigenvalue {c:.6g} lacks a conjugate partner")
        seen.update((i, j))
        theta = 0.5 * (np.angle(c) - np.angle(on[j][0]))
        w = np.exp(1j * abs(theta))
        k = nu_omega(a, w, tol)
        if k < 1:
            raise SpectralAmbiguity(f"cluster at angle {abs(theta):.6g} has no numerical kernel")
        entries.append(UnitEigen(w, len(members), k))
        entries.append(UnitEigen(np.conj(w), len(members), k))
    entries.sort(key=lambda e: e.angle)
    off_vals = tuple(v for _, members, _ in off for v in members)
    return UnitSpectrum(tuple(entries), len(off_vals), off_vals)


def elliptic_height(m, tol: Tolerances = DEFAULT) -> int:
    return sum(e.alg_mult for e in unit_circle_spectrum(m, tol).entries)


# normal forms -----------------------------------------------------------

@dataclass(frozen=True)
class NormalFormFactor:
    """One basic normal form.

    ``kind`` is one of ``"D"``, ``"N1"``, ``"R"``, ``"N2"`` or ``"residual-G"``;
    ``params`` holds ``lam``/``b`` for D and N1, ``theta`` for R, and the
    eigenvalues for residual blocks.
    """

    kind: str
    params: dict
    block: np.ndarray = field(repr=False)

    def to_json(self) -> dict:
        params = {}
        for k, v in self.params.items():
            if isinstance(v, (list, tuple, np.ndarray)):
                params[k] = [[complex(x).real, complex(x).imag] for x in v]
            else:
                params[k] = v
        return {"kind": self.kind, "params": params, "block": np.asarray(self.block).tolist()}


@dataclass
class NormalForm:
    factors: list
    p_minus: int = 0
    p_zero: int = 0
    p_plus: int = 0
    warnings: list = field(default_factory=list)

    @property
    def rotation_angles(self) -> list:
        return [f.params["theta"] for f in self.factors if f.kind == "R"]

    def product(self) -> SymplecticMatrix:
        return diamond(*[f.block for f in self.factors])


def _symplectic_basis(v: np.ndarray) -> np.ndarray:
    """Symplectic Gram-Schmidt on the real column span of ``v``.

    Returns ``S = [e_1..e_k, f_1..f_k]`` with ``S^T J S = J_2k``.
    """
    n = v.shape[0] // 2
    J = standard_j(n)
    cols = [c for c in np.linalg.qr(v)[0].T]
    es, fs = [], []
    while cols:
        e = cols.pop(0)
        pair = [abs(e @ J @ c) for c in cols]
        if not pair or max(pair) < 1e-10:
            raise DecompositionAmbiguity("invariant subspace is not symplectic")
        j = int(np.argmax(pair))
        f = cols.pop(j)
        f = f / -(e @ J @ f)
        es.append(e)
        fs.append(f)
        out = []
        for c in cols:
            c = c + (c @ J @ f) * e - (c @ J @ e) * f
            out.append(c)
        cols = out
    return np.column_stack(es + fs)


def _restrict(m: np.ndarray, select) -> np.ndarray:
    """Restriction of ``m`` to the real invariant subspace picked by ``select``."""
    t, z, sdim = schur(m, output="real", sort=lambda re, im: select(complex(re, im)))
    if sdim == 0:
        raise DecompositionAmbiguity("empty invariant subspace")
    s = _symplectic_basis(z[:, :sdim])
    return np.linalg.solve(s.T @ s, s.T @ m @ s)


def _jordan_signs(g: np.ndarray, lam: float, tol: Tolerances):
    """Counts (p_minus, p_zero, p_plus) for the eigenvalue-``lam`` block ``g``."""
    k = g.shape[0]
    a = g - lam * np.eye(k)
    nu = nu_omega(g, lam, tol)
    if np.linalg.norm(a @ a) > tol.rank * max(1.0, np.linalg.norm(g)) * 10:
        raise DecompositionAmbiguity(f"Jordan chains longer than 2 at eigenvalue {lam:+.0f}")
    J = standard_j(k // 2)
    q = a.T @ J
    q = 0.5 * (q + q.T)
    ev = np.linalg.eigvalsh(q)
    thresh = 1e3 * tol.rank * max(1.0, np.abs(g).max())
    neg = int(np.sum(ev < -thresh))
    pos = int(np.sum(ev > thresh))
    if neg + pos != k - nu or (2 * nu - k) % 2 or nu * 2 < k:
        raise DecompositionAmbiguity(
            f"Jordan structure at {lam:+.0f} undetermined: alg={k}, nu={nu}, signs=({neg},{pos})"
        )
    return neg, nu - k // 2, pos


def normal_form_decompose(m, tol: Tolerances = DEFAULT) -> NormalForm:
    """Decompose ``M`` into basic normal forms sharing its unit-circle invariants.

    Eigenvalue +-1 parts become N1(+-1, 1), N1(+-1, 0) and N1(+-1, -1) blocks
    whose counts are fixed by the sign of the pairing ``((M - lam) v)^T J v``
    on the generalized eigenspace.  Semisimple circle pairs become R(theta)
    with theta chosen by Krein sign, real hyperbolic pairs become D(+-2), and
    everything else is returned as a residual block.
    """
    a = np.asarray(m, dtype=float)
    spec = unit_circle_spectrum(a, tol)
    groups = _eigen_groups(a, tol)
    J = standard_j(a.shape[0] // 2)
    near = lambda z, c: abs(z - c) <= 2 * tol.cluster
    nf = NormalForm(factors=[])

    for lam in (1.0, -1.0):
        if spec.multiplicity(lam) == 0:
            continue
        g = _restrict(a, lambda z, lam=lam: near(z, lam))
        neg, zero, pos = _jordan_signs(g, lam, tol)
        if lam == 1.0:
            nf.p_minus, nf.p_zero, nf.p_plus = neg, zero, pos
        for b, count in ((1, neg), (0, zero), (-1, pos)):
            for _ in range(count):
                nf.factors.append(
                    NormalFormFactor("N1", {"lam": int(lam), "b": b}, np.asarray(n1(int(lam), b)))
                )

    for e in spec.entries:
        if not 0 < e.angle < np.pi:
            continue
        w = e.omega
        if e.nu != e.alg_mult:
            g = _restrict(a, lambda z, w=w: near(z, w) or near(z, np.conj(w)))
            nf.factors.append(NormalFormFactor("residual-G", {"eigenvalues": [w, np.conj(w)]}, g))
            nf.warnings.append(f"non-semisimple circle eigenvalue at angle {e.angle:.6g} kept in residual-G")
            continue
        x = null_space(a - w * np.eye(a.shape[0]), rcond=tol.rank)
        krein = np.linalg.eigvalsh(-1j * x.conj().T @ J @ x)
        if np.min(np.abs(krein)) < tol.rank:
            raise DecompositionAmbiguity(f"degenerate Krein form at angle {e.angle:.6g}")
        for s in krein:
            theta = e.angle if s > 0 else 2 * np.pi - e.angle
            nf.factors.append(NormalFormFactor("R", {"theta": float(theta)}, np.asarray(rotation(theta))))

    for c, members, on in groups:
        if on or abs(c) < 1:
            continue
        if abs(c.imag) <= tol.cluster * abs(c):
            lam = 2.0 if c.real > 0 else -2.0
            for _ in members:
                nf.factors.append(NormalFormFactor("D", {"lam": lam}, np.asarray(hyperbolic_d(lam))))
        elif c.imag > 0:
            g = _restrict(
                a,
                lambda z, c=c: any(near(z, t) for t in (c, np.conj(c), 1 / c, 1 / np.conj(c))),
            )
            nf.factors.append(
                NormalFormFactor("residual-G", {"eigenvalues": [c, np.conj(c), 1 / c, 1 / np.conj(c)]}, g)
            )
    if sum(f.block.shape[0] for f in nf.factors) != a.shape[0]:
        raise DecompositionAmbiguity("normal form factors do not account for the full dimension")
    for w in nf.warnings:
        warnings.warn(w)
    return nf


def rationality(x: float, q_max: int = DEFAULT.q_max, tol: float = DEFAULT.rat) -> dict:
    """Decide whether ``x`` is rational by its best approximation with denominator <= q_max.

    Returns ``{"rational": bool, "p": int, "q": int, "error": float}``; the
    witness fraction is reported either way.
    """
    fr = Fraction(float(x)).limit_denominator(q_max)
    err = abs(float(x) - fr.numerator / fr.denominator)
    return {"rational": bool(err <= tol), "p": fr.numerator, "q": fr.denominator, "error": err}
