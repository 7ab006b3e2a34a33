"""Common index jump arithmetic and the stability certificates built on it.

The engine works on a list of prime closed characteristics, each given by an
:class:`~closedchar.iteration.IndexProfile` whose iterate indices are
extended on demand.  It looks for integers ``(T, m_1..m_k)`` that make every
orbit's iterated index windows align around ``2T``.  It re-checks every
inequality of the resulting ledger against the computed index tables.  It then
enumerates the ways the degrees ``2(T - i)`` can be carried by orbit iterates,
which yields the non-hyperbolic and elliptic lower bounds.

Indices of the dual-action critical points are written ``iu(k)``; they relate
to the path indices by ``iu(k) = i(y, k) - n`` with unchanged nullity.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .config import DEFAULT, Tolerances
from .errors import AssignmentInfeasible, InvariantViolation, LedgerFailure, NoTupleFound
from .symplectic import rationality, unit_circle_spectrum

MODEL_ASSUMPTION = (
    "Assumption: for each 1 <= i <= n the degree 2(T-i) is carried by a critical "
    "orbit iterate whose Morse window [iu, iu + nu - 1] contains it. This is used "
    "as an axiom of the certificate; it is not computed."
)
FINITE_EVIDENCE = (
    "The existence of infinitely many jump tuples is evidenced by the first "
    "few valid T values only."
)


@dataclass(frozen=True)
class OrbitSummary:
    """Per-orbit data consumed by the jump engine.

    ``eigen_angles`` holds one rationality verdict per unit-circle eigenvalue
    of the monodromy (angle in ``[0, pi]``, stored as ``theta_over_pi``).
    """

    label: str
    n: int
    i1: int
    nu1: int
    S_plus: int
    mean_index: float
    mean_index_rationality: dict
    e: int
    symmetric: bool
    classification: str = ""
    eigen_angles: tuple = ()
    action: float | None = None

    @property
    def rational(self) -> bool:
        return bool(self.mean_index_rationality.get("rational", False))

    @property
    def mean_index_fraction(self) -> Fraction | None:
        r = self.mean_index_rationality
        return Fraction(r["p"], r["q"]) if self.rational else None

    @property
    def lemma_slack(self) -> int:
        """``i1 + 2 S+ - nu1 - n``; non-negative for symmetric orbits."""
        return self.i1 + 2 * self.S_plus - self.nu1 - self.n

    @property
    def hyperbolic(self) -> bool:
        return self.classification == "hyperbolic"

    @property
    def elliptic(self) -> bool:
        return self.classification in ("elliptic", "irrationally-elliptic")

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "n": self.n,
            "i1": self.i1,
            "nu1": self.nu1,
            "S_plus": self.S_plus,
            "mean_index": self.mean_index,
            "mean_index_rationality": dict(self.mean_index_rationality),
            "e": self.e,
            "symmetric": self.symmetric,
            "classification": self.classification,
            "eigen_angles": [dict(a) for a in self.eigen_angles],
            "action": self.action,
        }


def check_summary(s: OrbitSummary) -> OrbitSummary:
    """Raise :class:`InvariantViolation` if ``s`` breaks a required inequality."""
    checks = [
        ("i1>=n", s.i1 >= s.n, f"i(y,1) = {s.i1} < n = {s.n}"),
        ("mean-index>2", s.mean_index > 2.0, f"mean index {s.mean_index:.6g} <= 2"),
        ("2S+>=2", 2 * s.S_plus >= 2, f"2 S+ = {2 * s.S_plus} < 2"),
        ("e-even", s.e % 2 == 0 and 0 <= s.e <= 2 * s.n, f"elliptic height {s.e} not even in [0, 2n]"),
    ]
    if s.symmetric:
        checks.append(
            (
                "symmetric:i1+2S+-nu1>=n",
                s.lemma_slack >= 0,
                f"symmetric orbit has i1 + 2S+ - nu1 = {s.lemma_slack + s.n} < n = {s.n}",
            )
        )
    for tag, ok, msg in checks:
        if not ok:
            raise InvariantViolation(f"orbit {s.label}: {msg} [{tag}]", tag=tag, label=s.label)
    return s


def summarize(profile, characteristic=None, *, label=None, symmetric=None, action=None,
              n=None, tol: Tolerances = DEFAULT) -> OrbitSummary:
    """Extract and validate an :class:`OrbitSummary` from a profile.

    The symmetry flag, label and action come from ``characteristic`` unless
    given explicitly.

    Raises
    ------
    InvariantViolation
        Names the failed inequality and the orbit.
    """
    if characteristic is not None:
        label = characteristic.label if label is None else label
        symmetric = characteristic.symmetric_orbit if symmetric is None else symmetric
        action = characteristic.action if action is None else action
    if symmetric is None:
        raise ValueError("symmetry flag required")
    if n is None:
        n = profile.table.n if profile.table is not None else characteristic.trajectory.n
    angles = ()
    if profile.table is not None:
        spec = unit_circle_spectrum(profile.table.endpoint(1), tol)
        angles = tuple(
            {"theta_over_pi": e.angle / np.pi, **rationality(e.angle / np.pi, tol.q_max, tol.rat)}
            for e in spec.entries
        )
    s = OrbitSummary(
        label=label or "y",
        n=int(n),
        i1=int(profile.i(1)),
        nu1=int(profile.nu(1)),
        S_plus=int(profile.S_plus),
        mean_index=float(profile.mean_index),
        mean_index_rationality=dict(profile.mean_index_rationality),
        e=int(profile.elliptic_height),
        symmetric=bool(symmetric),
        classification=profile.classification,
        eigen_angles=angles,
        action=None if action is None else float(action),
    )
    return check_summary(s)


def common_M(summaries) -> int:
    """Least ``M`` with ``M theta / pi`` integral for every rational eigen-angle.

    Denominators of rational mean indices are folded in as well.  Returns 1
    when nothing is rational.
    """
    m = 1
    for s in summaries:
        for a in s.eigen_angles:
            if a["rational"]:
                m = math.lcm(m, int(a["q"]))
        if s.rational:
            m = math.lcm(m, int(s.mean_index_rationality["q"]))
    return m


@dataclass
class LedgerLine:
    tag: str
    orbit: str
    lhs: int
    rhs: int
    relation: str
    verdict: bool

    def to_json(self) -> dict:
        return {
            "tag": self.tag,
            "orbit": self.orbit,
            "lhs": self.lhs,
            "relation": self.relation,
            "rhs": self.rhs,
            "verdict": "PASS" if self.verdict else "FAIL",
        }

    def text(self) -> str:
        v = "PASS" if self.verdict else "FAIL"
        return f"[{v}] {self.orbit:>4}  {self.tag:<44} {self.lhs} {self.relation} {self.rhs}"


_REL = {
    "==": lambda a, b: a == b,
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
}


def _line(tag, orbit, lhs, rel, rhs) -> LedgerLine:
    return LedgerLine(tag, orbit, int(lhs), int(rhs), rel, bool(_REL[rel](lhs, rhs)))


@dataclass
class JumpTuple:
    T: int
    m: list
    chi: list
    ledger: list = field(default_factory=list)
    derived: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(x.verdict for x in self.ledger) and all(x.verdict for x in self.derived)

    def to_json(self) -> dict:
        return {
            "T": self.T,
            "m": list(self.m),
            "chi": list(self.chi),
            "ledger": [x.to_json() for x in self.ledger],
            "derived": [x.to_json() for x in self.derived],
        }


@dataclass
class JumpCertificate:
    """Jump tuples plus, once filled in, both stability certificates.

    ``tuples`` lists every valid tuple found, in scan order; the first one
    drives the stability certificates.
    """

    M_common: int
    tuples: list
    n: int
    labels: list
    theta_partition: dict | None = None
    nonhyperbolic_lower_bound: int | None = None
    elliptic_lower_bound: int | None = None
    rho_n: int | None = None
    theorem_1_1: dict | None = None
    theorem_1_2: dict | None = None
    notes: list = field(default_factory=list)
    profiles: list | None = field(default=None, repr=False)

    @property
    def T(self) -> int:
        return self.tuples[0].T

    @property
    def m(self) -> list:
        return self.tuples[0].m

    @property
    def chi(self) -> list:
        return self.tuples[0].chi

    @property
    def T_values(self) -> list:
        return [t.T for t in self.tuples]

    @property
    def passed(self) -> bool:
        ok = bool(self.tuples) and all(t.passed for t in self.tuples)
        if self.theorem_1_1 is not None:
            ok = ok and self.theorem_1_1["passed"]
        if self.theorem_1_2 is not None:
            ok = ok and self.theorem_1_2["passed"]
        return ok

    def to_json(self) -> dict:
        return {
            "status": "PASS" if self.passed else "FAIL",
            "assumption": MODEL_ASSUMPTION,
            "evidence": FINITE_EVIDENCE,
            "n": self.n,
            "orbits": list(self.labels),
            "M_common": self.M_common,
            "T_values": self.T_values,
            "tuples": [t.to_json() for t in self.tuples],
            "theta_partition": self.theta_partition,
            "nonhyperbolic_lower_bound": self.nonhyperbolic_lower_bound,
            "elliptic_lower_bound": self.elliptic_lower_bound,
            "rho_n": self.rho_n,
            "theorem_1_1": self.theorem_1_1,
            "theorem_1_2": self.theorem_1_2,
            "notes": list(self.notes),
        }

    def text(self) -> str:
        out = [
            "COMMON INDEX JUMP CERTIFICATE",
            f"status: {'PASS' if self.passed else 'FAIL'}",
            MODEL_ASSUMPTION,
            FINITE_EVIDENCE,
            f"n = {self.n}, orbits = {', '.join(self.labels)}, M = {self.M_common}",
            "",
        ]
        for t in self.tuples:
            ms = ", ".join(f"{lab}: m={m} chi={c}" for lab, m, c in zip(self.labels, t.m, t.chi))
            out.append(f"T = {t.T}  ({ms})")
            out.extend("  " + x.text() for x in t.ledger)
            out.extend("  " + x.text() for x in t.derived)
            out.append("")
        if self.theorem_1_1 is not None:
            t11 = self.theorem_1_1
            out.append("NON-HYPERBOLIC LOWER BOUND")
            out.append(f"  admissible assignments: {t11['assignments']}")
            part = self.theta_partition
            out.append(
                "  worst-case partition: "
                + "; ".join(f"{k} = {{{', '.join(part[k])}}}" for k in ("Theta1", "Theta2", "Theta3"))
            )
            for a in part["assignment"]:
                out.append(f"    degree {a['degree']} <- {a['orbit']}^{a['lambda']}  window {a['window']}")
            out.append(
                f"  guaranteed non-hyperbolic: {self.nonhyperbolic_lower_bound} "
                f"(need >= n - 1 = {self.n - 1}); classified non-hyperbolic: {t11['classified_nonhyperbolic']}"
            )
            for k, v in t11["claims"].items():
                out.append(f"  [{'PASS' if v else 'FAIL'}] {k}")
            out.append(f"  rational-mean-index check basis: {t11['claim3_basis']}")
            out.append("")
        if self.theorem_1_2 is not None:
            t12 = self.theorem_1_2
            out.append("ELLIPTIC LOWER BOUND")
            out.append(f"  rho_n = {self.rho_n}, k = {t12['k']}, route: {t12['route']}")
            out.append(
                f"  elliptic lower bound: {self.elliptic_lower_bound}; classified elliptic: {t12['classified_elliptic']}"
            )
        for note in self.notes:
            out.append(f"note: {note}")
        return "\n".join(out) + "\n"


def _floor_ratio(T: int, M: int, s: OrbitSummary) -> int:
    fr = s.mean_index_fraction
    if fr is not None:
        return math.floor(Fraction(T) / (M * fr))
    return math.floor(T / (M * s.mean_index))


def jump_conditions(T: int, m: int, s: OrbitSummary, prof) -> list:
    """Ledger lines of the five jump conditions for one orbit at ``(T, m)``."""
    n, e = s.n, s.e
    i1, nu1 = s.i1, s.nu1
    lab = s.label
    i_lo, nu_lo = prof.i(2 * m - 1), prof.nu(2 * m - 1)
    i_mid, nu_mid = prof.i(2 * m), prof.nu(2 * m)
    i_hi = prof.i(2 * m + 1)
    two_t = 2 * T
    return [
        _line("nu(2m-1) = nu(1)", lab, nu_lo, "==", nu1),
        _line("2 i(2m) >= 4T - e", lab, 2 * i_mid, ">=", 2 * two_t - e),
        _line("i(2m) >= 2T - n", lab, i_mid, ">=", two_t - n),
        _line("2 (i(2m) + nu(2m)) <= 4T + e - 2", lab, 2 * (i_mid + nu_mid), "<=", 2 * two_t + e - 2),
        _line("i(2m) + nu(2m) <= 2T + n - 1", lab, i_mid + nu_mid, "<=", two_t + n - 1),
        _line("i(2m+1) = 2T + i(1)", lab, i_hi, "==", two_t + i1),
        _line(
            "i(2m-1) + nu(2m-1) = 2T - (i1 + 2S+ - nu1)",
            lab,
            i_lo + nu_lo,
            "==",
            two_t - (i1 + 2 * s.S_plus - nu1),
        ),
    ]


def _t_step(summaries, M: int) -> int:
    """Smallest stride of ``T`` compatible with every rational mean index."""
    step = 1
    for s in summaries:
        fr = s.mean_index_fraction
        if fr is not None:
            # T q / (M p) integral  <=>  T multiple of M p / gcd(M p, q)
            mp = M * fr.numerator
            step = math.lcm(step, mp // math.gcd(mp, fr.denominator))
    return step


def find_jump_tuple(summaries, profiles, T_cap: int = 100000, count: int = 3,
                    M: int | None = None) -> JumpCertificate:
    """Scan ``T`` upward and return the first ``count`` valid jump tuples.

    For each ``T`` and orbit, ``m = ([T / (M mean)] + chi) M`` is tried with
    ``chi = 0`` then ``chi = 1`` (only ``chi = 0`` for rational mean index,
    where ``T / (M mean)`` must be integral).  The tuple is valid when every
    orbit passes all conditions in :func:`jump_conditions`.

    Raises
    ------
    NoTupleFound
        If fewer than ``count`` tuples exist up to ``T_cap``.  The diagnostics
        carry the nearest miss.
    """
    if len(summaries) != len(profiles):
        raise ValueError("one profile per summary required")
    if not summaries:
        raise NoTupleFound("no orbits to certify")
    M = common_M(summaries) if M is None else M
    n = summaries[0].n
    step = _t_step(summaries, M)
    found, best = [], None
    for T in range(step, T_cap + 1, step):
        ms, chis, lines, fails = [], [], [], 0
        for s, prof in zip(summaries, profiles):
            base = _floor_ratio(T, M, s)
            choice = None
            for chi in (0,) if s.rational else (0, 1):
                m = (base + chi) * M
                if m < 1:
                    continue
                ln = jump_conditions(T, m, s, prof)
                bad = sum(not x.verdict for x in ln)
                if bad == 0:
                    choice = (m, chi, ln)
                    break
                if best is None or bad < best["failures"]:
                    best = {"T": T, "orbit": s.label, "m": m, "chi": chi, "failures": bad,
                            "failed": [x.to_json() for x in ln if not x.verdict]}
            if choice is None:
                fails += 1
                break
            ms.append(choice[0])
            chis.append(choice[1])
            lines.extend(choice[2])
        if fails == 0:
            found.append(JumpTuple(T, ms, chis, lines))
            if len(found) >= count:
                break
    if len(found) < count:
        raise NoTupleFound(
            f"found {len(found)} of {count} jump tuples with T <= {T_cap} (M = {M}, T stride {step})",
            diagnostics={"nearest_miss": best, "found": [t.T for t in found]},
        )
    cert = JumpCertificate(M, found, n, [s.label for s in summaries], profiles=list(profiles))
    cert.notes.append(f"T scanned in strides of {step}")
    return cert


def _iu(prof, k, n):
    return prof.i(k) - n


def derived_bounds(cert: JumpCertificate, summaries, profiles=None, horizon: int = 16) -> list:
    """Evaluate the derived inequalities for every tuple of ``cert``.

    The bound over all ``k >= 1`` iterates beyond ``2m`` is checked on
    ``1 <= k <= horizon`` and extended by the strict monotonicity of
    ``i(y, m)``, which is checked up to ``2m + horizon``.

    Raises
    ------
    LedgerFailure
        On the first failing line; all lines are stored on the tuples first.
    """
    profiles = profiles or cert.profiles
    first_bad = None
    for tup in cert.tuples:
        T = tup.T
        tup.derived = []
        for s, prof, m in zip(summaries, profiles, tup.m):
            n, lab = s.n, s.label
            out = tup.derived
            lo = 2 * m - 1
            out.append(_line("i(2m-1) = 2T - (i1 + 2S+)", lab, prof.i(lo), "==", 2 * T - s.i1 - 2 * s.S_plus))
            out.append(_line("i(2m-1) <= 2T - n - 2", lab, prof.i(lo), "<=", 2 * T - n - 2))
            out.append(_line("iu(2m) >= 2T - 2n", lab, _iu(prof, 2 * m, n), ">=", 2 * T - 2 * n))
            out.append(
                _line("iu(2m) + nu(2m) - 1 <= 2T - 2", lab, _iu(prof, 2 * m, n) + prof.nu(2 * m) - 1, "<=", 2 * T - 2)
            )
            hz = horizon
            worst_hi = min(_iu(prof, 2 * m + k, n) for k in range(1, hz + 1))
            out.append(_line(f"iu(2m+k) >= 2T, 1<=k<={hz}", lab, worst_hi, ">=", 2 * T))
            mono = all(prof.i(j) < prof.i(j + 1) for j in range(1, 2 * m + hz))
            out.append(_line(f"i(j) < i(j+1), j<{2 * m + hz}", lab, int(mono), "==", 1))
            if m >= 2:
                worst_lo = max(_iu(prof, 2 * m - k, n) + prof.nu(2 * m - k) - 1 for k in range(2, 2 * m))
                out.append(
                    _line(f"iu(2m-k) + nu(2m-k) - 1 <= 2T - 2n - 4, 2<=k<={2 * m - 1}", lab, worst_lo, "<=",
                          2 * T - 2 * n - 4)
                )
            top = _iu(prof, lo, n) + prof.nu(lo) - 1
            out.append(
                _line("iu(2m-1) + nu(2m-1) - 1 = 2T - (i1 + 2S+ - nu1) - n - 1", lab, top, "==",
                      2 * T - (s.i1 + 2 * s.S_plus - s.nu1) - n - 1)
            )
            if s.symmetric:
                out.append(_line("symmetric: iu(2m-1) + nu(2m-1) - 1 <= 2T - 2n - 1", lab, top, "<=",
                                 2 * T - 2 * n - 1))
            e_half_gap = min(
                prof.i(j + 1) - prof.i(1) + s.e // 2 - 1 - (prof.i(j) + prof.nu(j)) for j in range(1, 2 * m + 1)
            )
            out.append(_line(f"i(j+1) - i(1) + e/2 - 1 - i(j) - nu(j) >= 0, j<={2 * m}", lab, e_half_gap, ">=", 0))
        if first_bad is None:
            first_bad = next((x for x in tup.derived if not x.verdict), None)
            if first_bad is not None:
                first_bad = (T, first_bad)
    if first_bad is not None:
        T, x = first_bad
        raise LedgerFailure(f"T = {T}: {x.text()}", line=x.to_json())
    return [x for t in cert.tuples for x in t.derived]


@dataclass(frozen=True)
class Carrier:
    orbit: int
    lam: int
    lo: int
    hi: int
    phi: float | None


def _carriers(cert, summaries, profiles, degrees, phi_of, extra: int = 8) -> dict:
    """All orbit iterates whose Morse window contains some target degree."""
    out = {d: [] for d in degrees}
    for j, (s, prof, m) in enumerate(zip(summaries, profiles, cert.m)):
        for lam in range(1, 2 * m + extra + 1):
            lo = _iu(prof, lam, s.n)
            hi = lo + prof.nu(lam) - 1
            phi = phi_of(s, lam)
            for d in degrees:
                if lo <= d <= hi:
                    out[d].append(Carrier(j, lam, lo, hi, phi))
    return out


def theorem_1_1_certificate(cert: JumpCertificate, summaries, profiles=None, alpha: float | None = None,
                            limit: int = 200000, phi_tol: float = 1e-9) -> dict:
    """Worst-case non-hyperbolic count over all admissible carrier assignments.

    An assignment maps each degree ``2(T - i)``, ``1 <= i <= n``, to a
    distinct orbit iterate ``(rho(i), lambda(i))`` whose Morse window contains
    it.  Each assignment is partitioned into the sets of orbits hit twice,
    hit once at ``2m - 1`` and hit once at ``2m``, and contributes
    ``2 #Theta1 + 2 #Theta2 + #Theta3 - 1`` guaranteed non-hyperbolic orbits.

    Carriers of distinct degrees sit at distinct critical levels when the
    orbit set is finite.  With actions known this is checked through ``Phi``
    of the assigned iterates; a coincidence means two rational mean indices
    share ``2 m mean = 2T`` and the claim on ``Theta3`` fails.

    Raises
    ------
    AssignmentInfeasible
        If no admissible assignment exists, or the enumeration exceeds ``limit``.
    """
    from .dual_action import phi_of_action

    profiles = profiles or cert.profiles
    n, T = cert.n, cert.T
    degrees = [2 * (T - i) for i in range(1, n + 1)]
    have_phi = alpha is not None and all(s.action is not None for s in summaries)

    def phi_of(s, lam):
        return phi_of_action(lam * s.action, alpha) if have_phi else None

    carriers = _carriers(cert, summaries, profiles, degrees, phi_of)
    empty = [d for d in degrees if not carriers[d]]
    if empty:
        raise AssignmentInfeasible(f"no orbit iterate carries degree(s) {empty} at T = {T}")
    total = math.prod(len(carriers[d]) for d in degrees)
    if total > limit:
        raise AssignmentInfeasible(f"{total} candidate assignments exceed the enumeration limit {limit}")

    lam_ok = all(c.lam in (2 * cert.m[c.orbit] - 1, 2 * cert.m[c.orbit]) for d in degrees for c in carriers[d])
    claims = {"carriers only at 2m-1 or 2m": lam_ok,
              "symmetric orbit => lambda = 2m": True,
              "lambda = 2m-1 => non-symmetric and non-hyperbolic": True,
              "at most one rational mean index in Theta3": True,
              "2#Theta1 + #Theta2 + #Theta3 = n": True}
    if have_phi:
        claims["carriers at distinct critical values"] = True
    worst, worst_part, admissible = None, None, 0
    for combo in itertools.product(*(carriers[d] for d in degrees)):
        if len({(c.orbit, c.lam) for c in combo}) < n:
            continue
        admissible += 1
        hits = {}
        for c in combo:
            hits.setdefault(c.orbit, []).append(c.lam)
        th1 = sorted(j for j, ls in hits.items() if len(ls) == 2)
        th2 = sorted(j for j, ls in hits.items() if len(ls) == 1 and ls[0] == 2 * cert.m[j] - 1)
        th3 = sorted(j for j, ls in hits.items() if len(ls) == 1 and ls[0] == 2 * cert.m[j])
        if any(len(ls) > 2 for ls in hits.values()):
            claims["carriers only at 2m-1 or 2m"] = False
        for c in combo:
            s = summaries[c.orbit]
            if s.symmetric and c.lam != 2 * cert.m[c.orbit]:
                claims["symmetric orbit => lambda = 2m"] = False
            if c.lam == 2 * cert.m[c.orbit] - 1 and (s.symmetric or s.hyperbolic):
                claims["lambda = 2m-1 => non-symmetric and non-hyperbolic"] = False
        if sum(summaries[j].rational for j in th3) > 1:
            claims["at most one rational mean index in Theta3"] = False
        if have_phi:
            phis = [c.phi for c in combo]
            if any(abs(a - b) <= phi_tol * max(abs(a), abs(b)) for a, b in itertools.combinations(phis, 2)):
                claims["carriers at distinct critical values"] = False
                if len(th3) > 1:
                    claims["at most one rational mean index in Theta3"] = False
        if 2 * len(th1) + len(th2) + len(th3) != n:
            claims["2#Theta1 + #Theta2 + #Theta3 = n"] = False
        count = 2 * len(th1) + 2 * len(th2) + len(th3) - 1
        if worst is None or count < worst:
            worst = count
            worst_part = {
                "Theta1": [summaries[j].label for j in th1],
                "Theta2": [summaries[j].label for j in th2],
                "Theta3": [summaries[j].label for j in th3],
                "assignment": [
                    {"degree": d, "orbit": summaries[c.orbit].label, "lambda": c.lam, "window": [c.lo, c.hi]}
                    for d, c in zip(degrees, combo)
                ],
            }
    if admissible == 0:
        raise AssignmentInfeasible(f"no admissible assignment of degrees {degrees} at T = {T}")
    classified = sum((1 if s.symmetric else 2) for s in summaries if not s.hyperbolic)
    result = {
        "T": T,
        "degrees": degrees,
        "assignments": admissible,
        "nonhyperbolic_lower_bound": worst,
        "required": n - 1,
        "classified_nonhyperbolic": classified,
        "classification_confirms": classified >= worst,
        "claims": claims,
        "claim3_basis": "distinct critical values from actions" if have_phi else
        "mean-index rationality only (no action data)",
    }
    result["passed"] = bool(worst >= n - 1 and all(claims.values()) and result["classification_confirms"])
    cert.theta_partition = worst_part
    cert.nonhyperbolic_lower_bound = worst
    cert.theorem_1_1 = result
    return result


def rho_n(summaries, n: int | None = None) -> int:
    """``min [(i1 + 2 S+ - nu1 + n) / 2]`` over the given orbits."""
    n = summaries[0].n if n is None else n
    return min((s.i1 + 2 * s.S_plus - s.nu1 + n) // 2 for s in summaries)


def rho_n_and_theorem_1_2(summaries, cert: JumpCertificate | None = None) -> tuple:
    """``(rho_n, elliptic_lower_bound, detail)``.

    ``k`` counts geometrically distinct orbits: a non-symmetric summary stands
    for itself and its negation.  Two elliptic orbits are guaranteed when
    ``k <= 2 rho_n - 2``.  Failing that, with ``k = n`` odd and a
    non-symmetric pair present, one member of the pair is dropped and the
    test is repeated on the remaining ``k - 1`` orbits.
    """
    n = summaries[0].n
    k = sum(1 if s.symmetric else 2 for s in summaries)
    rho = rho_n(summaries, n)
    route, bound = "none", 0
    if k <= 2 * rho - 2:
        bound = 2
        route = "k <= 2 rho_n - 2" + (" (all symmetric: rho_n >= n)" if all(s.symmetric for s in summaries) else "")
    elif k == n and n % 2 == 1 and any(not s.symmetric for s in summaries):
        if k - 1 <= 2 * rho - 2:
            bound, route = 2, "non-symmetric pair reduced to k - 1 orbits"
    elliptic = sum((1 if s.symmetric else 2) for s in summaries if s.elliptic)
    detail = {
        "rho_n": rho,
        "k": k,
        "route": route,
        "elliptic_lower_bound": bound,
        "classified_elliptic": elliptic,
        "all_symmetric_rho_at_least_n": (rho >= n) if all(s.symmetric for s in summaries) else None,
    }
    detail["passed"] = bool(elliptic >= bound and (detail["all_symmetric_rho_at_least_n"] is not False))
    if k == n:
        detail["passed"] = detail["passed"] and bound == 2
    if cert is not None:
        cert.rho_n = rho
        cert.elliptic_lower_bound = bound
        cert.theorem_1_2 = detail
    return rho, bound, detail


def certify(summaries, profiles, T_cap: int = 100000, count: int = 3, alpha: float | None = None) -> JumpCertificate:
    """Run the tuple search, the derived ledger and both stability certificates."""
    cert = find_jump_tuple(summaries, profiles, T_cap, count)
    derived_bounds(cert, summaries, profiles)
    theorem_1_1_certificate(cert, summaries, profiles, alpha)
    rho_n_and_theorem_1_2(summaries, cert)
    return cert
