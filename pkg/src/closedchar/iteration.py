"""Index iteration: ``(i(gamma, m), nu(gamma, m))``, mean index, splitting numbers, classification."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT, Tolerances
from .errors import DecompositionAmbiguity, GapTooSmall, SlopeUnstable
from .pathindex import OmegaIndex, SymplecticPath, _winding_segment, index_from_winding, omega_index
from .symplectic import (
    elliptic_height,
    normal_form_decompose,
    rationality,
    unit_circle_spectrum,
)

CLASSES = ("elliptic", "hyperbolic", "nondegenerate-other", "irrationally-elliptic", "degenerate-other")


class IterationTable:
    """Lazily extended table of iterate windings for one generator path.

    The winding of ``gamma^m`` is the sum of the windings of the segments
    ``t -> gamma(t) M^j`` for ``j < m``; each segment is computed once and
    cached, so deeper iterates cost one extra segment each.
    """

    def __init__(self, path: SymplecticPath, tol: Tolerances | None = None):
        self.path = path
        self.tol = tol or path.tol
        self._end = np.array(path.matrices[-1])
        self._wind = [0.0]
        self._pow = [np.eye(self._end.shape[0])]

    @property
    def n(self) -> int:
        return self.path.n

    @property
    def depth(self) -> int:
        return len(self._wind) - 1

    def _extend(self, m: int):
        p = self.path
        while len(self._wind) <= m:
            right = self._pow[-1]
            dph, p._ts, p._mats = _winding_segment(
                p.func, p._ts, p._mats, None if len(self._wind) == 1 else right, self.tol
            )
            self._wind.append(self._wind[-1] + 2.0 * dph)
            self._pow.append(right @ self._end)

    def endpoint(self, m: int) -> np.ndarray:
        self._extend(m)
        return self._pow[m]

    def winding(self, m: int) -> float:
        self._extend(m)
        return self._wind[m]

    def omega_index(self, m: int, omega: complex = 1.0) -> OmegaIndex:
        if m < 1:
            raise ValueError("m must be >= 1")
        self._extend(m)
        return index_from_winding(self._pow[m], self._wind[m], omega, self.tol)

    def i(self, m: int) -> int:
        return self.omega_index(m).index

    def nu(self, m: int) -> int:
        return self.omega_index(m).nullity


def _table(obj) -> IterationTable:
    return obj if isinstance(obj, IterationTable) else IterationTable(obj)


def index_iterates(path, m_max: int) -> dict:
    """``{"i": {m: i(gamma, m)}, "nu": {m: nu(gamma, m)}}`` for ``1 <= m <= m_max``."""
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    tab = _table(path)
    out = {"i": {}, "nu": {}}
    for m in range(1, m_max + 1):
        try:
            r = tab.omega_index(m)
        except Exception as exc:
            raise type(exc)(f"iterate m={m}: {exc}") from exc
        out["i"][m], out["nu"][m] = r.index, r.nullity
    return out


def bott_sum_oracle(path: SymplecticPath, m: int) -> int:
    """``sum over omega^m = 1 of i_omega(gamma)``; a cross-check of the iterate index."""
    w = _table(path).winding(1)
    end = path.matrices[-1]
    return sum(
        index_from_winding(end, w, np.exp(2j * np.pi * k / m), path.tol).index for k in range(m)
    )


def _gap_around(m, omega: complex, tol: Tolerances) -> float:
    spec = unit_circle_spectrum(m, tol)
    phi = np.angle(omega)
    d = [abs(np.angle(e.omega * np.exp(-1j * phi))) for e in spec.entries]
    far = [x for x in d if x > tol.cluster * 10]
    return min(far) if far else np.pi


def splitting_numbers(path, omega: complex = 1.0, tol: Tolerances | None = None) -> tuple:
    """``(S+, S-)`` of the endpoint at ``omega``.

    Evaluated as ``i_{omega exp(+-i eps)} - i_omega`` with ``eps`` below a
    quarter of the angular gap to the rest of the circle spectrum, and
    accepted only if halving ``eps`` gives the same pair.
    """
    tab = _table(path)
    tol = tol or tab.tol
    m = tab.endpoint(1)
    w = tab.winding(1)
    base = index_from_winding(m, w, omega, tol).index
    eps = min(tol.split_eps, _gap_around(m, omega, tol) / 4.0)
    if eps < tol.split_eps_min:
        raise GapTooSmall(f"angular gap around {omega} allows only eps={eps:.2e}")

    def pair(e):
        return tuple(
            index_from_winding(m, w, omega * np.exp(s * 1j * e), tol).index - base for s in (1, -1)
        )

    first, second = pair(eps), pair(eps / 2)
    while first != second:
        eps /= 2
        if eps < tol.split_eps_min:
            raise GapTooSmall(f"splitting numbers at {omega} unstable down to eps={eps:.2e}")
        first, second = second, pair(eps / 2)
    return first


@dataclass
class MeanIndex:
    slope: float
    residual: float
    exact: float | None = None

    @property
    def value(self) -> float:
        return self.slope if self.exact is None else self.exact


def _exact_mean_index(tab: IterationTable, tol: Tolerances) -> float:
    """Average of ``i_omega`` over the circle, from endpoint eigen-angles.

    ``i_omega`` is locally constant off the endpoint spectrum and symmetric
    under conjugation, so one evaluation per arc of ``(0, pi)`` suffices.
    """
    m = tab.endpoint(1)
    w = tab.winding(1)
    spec = unit_circle_spectrum(m, tol)
    cuts = sorted({e.angle for e in spec.entries if 0 < e.angle < np.pi})
    pts = [0.0] + cuts + [np.pi]
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        total += (b - a) * index_from_winding(m, w, np.exp(0.5j * (a + b)), tol).index
    return total / np.pi


def mean_index(profile_i: dict, path=None, tol: Tolerances = DEFAULT) -> MeanIndex:
    """Mean index from the least-squares slope of ``m -> i(gamma, m)``.

    ``residual`` is the standard error of the slope.  When ``path`` is given
    the exact value from the endpoint spectrum is attached.

    Raises
    ------
    SlopeUnstable
        If fewer than 16 iterates are given or the standard error exceeds
        ``tol.fit``.
    """
    ms = np.array(sorted(profile_i), dtype=float)
    if len(ms) < 16:
        raise SlopeUnstable("mean index needs at least 16 iterates")
    ys = np.array([profile_i[int(m)] for m in ms], dtype=float)
    (slope, icpt), res, *_ = np.polyfit(ms, ys, 1, full=True)
    dof = len(ms) - 2
    sigma = np.sqrt(float(res[0]) / dof) if len(res) else 0.0
    se = sigma / np.sqrt(np.sum((ms - ms.mean()) ** 2))
    if se > tol.fit:
        raise SlopeUnstable(f"slope standard error {se:.3g} exceeds {tol.fit}")
    exact = _exact_mean_index(_table(path), tol) if path is not None else None
    return MeanIndex(float(slope), float(se), exact)


def _rotation_verdicts(nf, tol: Tolerances) -> list:
    out = []
    for theta in nf.rotation_angles:
        v = rationality(theta / np.pi, tol.q_max, tol.rat)
        out.append({"theta_over_pi": theta / np.pi, **v})
    return out


def classify(m, tol: Tolerances = DEFAULT) -> str:
    """Orbit class of a characteristic monodromy.

    Precedence: irrationally-elliptic, elliptic, hyperbolic,
    nondegenerate-other, degenerate-other.
    """
    a = np.asarray(m, dtype=float)
    n = a.shape[0] // 2
    spec = unit_circle_spectrum(a, tol)
    e = sum(x.alg_mult for x in spec.entries)
    alg1 = spec.multiplicity(1.0)
    if e == 2 * n:
        nf = normal_form_decompose(a, tol)
        rots = [f for f in nf.factors if f.kind == "R"]
        if (nf.p_minus, nf.p_zero, nf.p_plus) == (1, 0, 0) and len(rots) == n - 1 and len(nf.factors) == n:
            if all(not v["rational"] for v in _rotation_verdicts(nf, tol)):
                return "irrationally-elliptic"
        return "elliptic"
    if alg1 == 2 and e == 2:
        return "hyperbolic"
    if alg1 == 2:
        return "nondegenerate-other"
    return "degenerate-other"


@dataclass
class IndexProfile:
    i_of_m: dict
    nu_of_m: dict
    mean_index: float
    mean_index_slope: float
    slope_residual: float
    S_plus: int
    S_minus: int
    elliptic_height: int
    classification: str
    rotation_angles: list = field(default_factory=list)
    mean_index_rationality: dict = field(default_factory=dict)
    p_counts: tuple = (0, 0, 0)
    table: IterationTable | None = field(default=None, repr=False, compare=False)

    @property
    def m_max(self) -> int:
        return max(self.i_of_m)

    def i(self, m: int) -> int:
        if m not in self.i_of_m and self.table is not None:
            r = self.table.omega_index(m)
            self.i_of_m[m], self.nu_of_m[m] = r.index, r.nullity
        return self.i_of_m[m]

    def nu(self, m: int) -> int:
        if m not in self.nu_of_m:
            self.i(m)
        return self.nu_of_m[m]

    def to_json(self, m_limit: int | None = None) -> dict:
        ms = sorted(self.i_of_m)
        if m_limit is not None:
            ms = [m for m in ms if m <= m_limit]
        return {
            "i_of_m": {str(m): self.i_of_m[m] for m in ms},
            "nu_of_m": {str(m): self.nu_of_m[m] for m in ms},
            "mean_index": self.mean_index,
            "mean_index_slope": self.mean_index_slope,
            "slope_residual": self.slope_residual,
            "mean_index_rationality": self.mean_index_rationality,
            "S_plus": self.S_plus,
            "S_minus": self.S_minus,
            "elliptic_height": self.elliptic_height,
            "classification": self.classification,
            "rotation_angles": self.rotation_angles,
            "p_counts": list(self.p_counts),
        }


def build_profile(path: SymplecticPath, m_max: int = 32, tol: Tolerances | None = None) -> IndexProfile:
    """Full index profile of a characteristic's associated path."""
    tol = tol or path.tol
    tab = IterationTable(path, tol)
    data = index_iterates(tab, m_max)
    mi = mean_index(data["i"], tab, tol)
    end = tab.endpoint(1)
    s_plus, s_minus = splitting_numbers(tab, 1.0, tol)
    try:
        nf = normal_form_decompose(end, tol)
        rots = _rotation_verdicts(nf, tol)
        counts = (nf.p_minus, nf.p_zero, nf.p_plus)
    except DecompositionAmbiguity:
        rots, counts = [], (0, 0, 0)
    return IndexProfile(
        i_of_m=data["i"],
        nu_of_m=data["nu"],
        mean_index=mi.value,
        mean_index_slope=mi.slope,
        slope_residual=mi.residual,
        S_plus=s_plus,
        S_minus=s_minus,
        elliptic_height=elliptic_height(end, tol),
        classification=classify(end, tol),
        rotation_angles=rots,
        mean_index_rationality=rationality(mi.value, tol.q_max, tol.rat),
        p_counts=counts,
        table=tab,
    )
