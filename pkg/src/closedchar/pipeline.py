"""Run configuration, orchestration and report emission."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import logging
import os
import platform
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy

from . import __version__
from .config import DEFAULT, Tolerances
from .dual_action import SolverBudget, find_critical_points, morse_data, loop_from_characteristic, phi_of_action
from .errors import ClosedCharError, ConfigError
from .hypersurface import body_from_spec, ellipsoid_characteristics
from .iteration import build_profile
from .jump import certify, summarize

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
METHODS = ("closed-form", "dual-action", "both")


@dataclass
class RunConfig:
    """Validated run configuration.

    ``solver`` holds :class:`SolverBudget` fields; ``tolerances`` holds
    overrides of :class:`Tolerances` fields.
    """

    body: dict
    alpha: float = 1.5
    method: str = "closed-form"
    solver: dict = field(default_factory=dict)
    m_max: int = 32
    tolerances: dict = field(default_factory=dict)
    T_cap: int = 100000
    jump_count: int = 3
    shift_audit_m: int = 1
    out_dir: str = "out"
    seed: int = 0

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        bad = set(raw) - known
        if bad:
            raise ConfigError(f"unknown config keys: {sorted(bad)}")
        if "body" not in raw:
            raise ConfigError("config needs a 'body' entry")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    def validate(self):
        try:
            alpha = float(self.alpha)
        except (TypeError, ValueError):
            raise ConfigError(f"alpha must be a number, got {self.alpha!r}") from None
        if not 1.0 < alpha < 2.0:
            raise ConfigError(f"alpha must lie in (1, 2), got {self.alpha}")
        self.alpha = alpha
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if int(self.m_max) < 16:
            raise ConfigError(f"m_max must be >= 16, got {self.m_max}")
        if int(self.T_cap) < 1 or int(self.jump_count) < 1 or int(self.shift_audit_m) < 0:
            raise ConfigError("T_cap and jump_count must be positive, shift_audit_m non-negative")
        bad = set(self.solver) - set(SolverBudget.__dataclass_fields__)
        if bad:
            raise ConfigError(f"unknown solver keys: {sorted(bad)}")
        try:
            self.tol
        except KeyError as exc:
            raise ConfigError(str(exc)) from None
        try:
            self.make_body()
        except (ValueError, KeyError, TypeError, ClosedCharError) as exc:
            raise ConfigError(f"bad body spec: {exc}") from exc
        if self.method != "dual-action" and self.body.get("kind") != "ellipsoid":
            raise ConfigError("the closed-form method needs an ellipsoid body")

    @property
    def tol(self) -> Tolerances:
        return DEFAULT.with_overrides(self.tolerances)

    def budget(self) -> SolverBudget:
        return SolverBudget(**{**self.solver, "seed": int(self.seed)})

    def make_body(self):
        return body_from_spec(self.body)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def hash(self) -> str:
        d = self.to_dict()
        d.pop("out_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


@dataclass
class RunReport:
    config: RunConfig
    status: str = "PASS"
    orbits: list = field(default_factory=list)
    profiles: dict = field(default_factory=dict)
    critical_points: list = field(default_factory=list)
    cross_check: list = field(default_factory=list)
    certificate: object = None
    audit: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    characteristics: list = field(default_factory=list, repr=False)
    summaries: list = field(default_factory=list, repr=False)
    profile_objs: list = field(default_factory=list, repr=False)

    @property
    def exit_code(self) -> int:
        if self.errors:
            return 3
        return 0 if all(a["verdict"] == "PASS" for a in self.audit) else 2

    def to_json(self, timestamp: str | None = None) -> dict:
        cert = self.certificate
        return {
            "schema_version": SCHEMA_VERSION,
            "status": self.status,
            "provenance": {
                "config_hash": self.config.hash(),
                "versions": {
                    "closedchar": __version__,
                    "numpy": np.__version__,
                    "scipy": scipy.__version__,
                    "python": platform.python_version(),
                },
                "timestamp": timestamp,
            },
            "config": self.config.to_dict(),
            "orbits": self.orbits,
            "profiles": self.profiles,
            "critical_points": self.critical_points,
            "cross_check": self.cross_check,
            "certificate": None if cert is None else cert.to_json(),
            "audit": self.audit,
            "errors": self.errors,
        }


class _Stage:
    def __init__(self, report: RunReport, name: str):
        self.report, self.name = report, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        log.info("stage %s", self.name)
        return self

    def __exit__(self, etype, exc, tb):
        self.report.timings[self.name] = time.perf_counter() - self.t0
        if exc is None:
            return False
        if isinstance(exc, ClosedCharError):
            self.report.errors.append({"stage": self.name, "type": type(exc).__name__, "message": str(exc)})
            self.report.status = "FAILED"
            log.error("stage %s failed: %s", self.name, exc)
            return True
        return False


def _orbit_row(char, profile, summary, phi, method) -> dict:
    return {
        "label": char.label,
        "method": method,
        "tau": char.tau,
        "action": char.action,
        "phi": phi,
        "i1": profile.i(1),
        "nu1": profile.nu(1),
        "mean_index": profile.mean_index,
        "e": profile.elliptic_height,
        "S_plus": profile.S_plus,
        "classification": profile.classification,
        "symmetric": char.symmetric_orbit,
        "summary_ok": summary is not None,
    }


def _match_actions(primary, other, rel: float) -> list:
    out = []
    for c in primary:
        best = min(other, key=lambda d: abs(d.action - c.action), default=None)
        if best is None:
            out.append({"label": c.label, "match": None, "rel_error": None, "verdict": "FAIL"})
            continue
        err = abs(best.action - c.action) / c.action
        out.append({"label": c.label, "match": best.label, "rel_error": err,
                    "verdict": "PASS" if err <= rel else "FAIL"})
    return out


def run_pipeline(config: RunConfig) -> RunReport:
    """Body, orbits, profiles, summaries, certificate, audit.

    Stage errors are recorded on the report (status ``FAILED``) and the
    remaining stages that depend on them are skipped.
    """
    rep = RunReport(config)
    tol = config.tol
    alpha = config.alpha
    body = config.make_body()
    closed, dual, cps = [], [], []

    if config.method in ("closed-form", "both"):
        with _Stage(rep, "closed-form"):
            closed = ellipsoid_characteristics(body.radii, alpha, tol)
    if config.method in ("dual-action", "both"):
        with _Stage(rep, "dual-action"):
            cps = find_critical_points(body, alpha, config.budget(), tol, with_morse=True)
            dual = [cp.recovered_orbit for cp in cps]
            rep.critical_points = [cp.to_json() for cp in cps]
    if closed and dual:
        rep.cross_check = _match_actions(closed, dual, 1e-5)
    chars = closed or dual
    if not chars:
        if not rep.errors:
            rep.errors.append({"stage": "orbits", "type": "NoOrbits", "message": "no closed characteristic found"})
        rep.status = "FAILED"
        return rep
    rep.characteristics = chars
    phis = {}
    for cp in cps:
        phis[cp.recovered_orbit.label] = cp.phi_value

    with _Stage(rep, "profiles"):
        profs = [build_profile(c.path, config.m_max, tol) for c in chars]
        rep.profile_objs = profs
        rep.profiles = {c.label: p.to_json(config.m_max) for c, p in zip(chars, profs)}
    if not rep.profile_objs:
        return rep

    sums = []
    for c, p in zip(chars, rep.profile_objs):
        s = None
        with _Stage(rep, f"summary {c.label}"):
            s = summarize(p, c, tol=tol)
        sums.append(s)
        phi = phis.get(c.label, phi_of_action(c.action, alpha))
        rep.orbits.append(_orbit_row(c, p, s, phi, c.method))
    if any(s is None for s in sums):
        rep.status = "FAILED"
        audit_invariants(rep)
        return rep
    rep.summaries = sums

    with _Stage(rep, "certificate"):
        rep.certificate = certify(sums, rep.profile_objs, int(config.T_cap), int(config.jump_count), alpha)

    if config.shift_audit_m > 0 and cps:
        with _Stage(rep, "morse"):
            for cp in cps:
                char = cp.recovered_orbit
                data = []
                for m in range(1, config.shift_audit_m + 1):
                    u = loop_from_characteristic(char, m, config.budget().n_modes)
                    data.append(morse_data(u, body, alpha, tol))
                cp.diagnostics["morse_iterates"] = data
    audit_invariants(rep, cps)
    if rep.status != "FAILED":
        rep.status = "PASS" if all(a["verdict"] == "PASS" for a in rep.audit) else "FAIL"
    return rep


def _audit(rep, name, ok, slack=None, detail=None):
    rep.audit.append({"invariant": name, "verdict": "PASS" if ok else "FAIL", "slack": slack, "detail": detail})


def audit_invariants(rep: RunReport, cps=()) -> list:
    """Evaluate the invariants of every stage on the run's artifacts.

    Appends one entry per invariant with verdict and measured slack; never
    raises.
    """
    tol = rep.config.tol
    chars, profs, sums = rep.characteristics, rep.profile_objs, rep.summaries
    rep.audit = []
    if not chars or not profs:
        return rep.audit
    n = profs[0].table.n
    body = rep.config.make_body()

    worst_sym = max(float(c.monodromy.residual) for c in chars)
    _audit(rep, "monodromy symplectic residual", worst_sym <= tol.sympl, worst_sym)
    for c in chars:
        try:
            v = c.validate(body, tol)
            _audit(rep, f"{c.label}: closed orbit on the surface", True, v["closure_gap"])
        except ClosedCharError as exc:
            _audit(rep, f"{c.label}: closed orbit on the surface", False, detail=str(exc))

    slack = min(p.mean_index - 2.0 for p in profs)
    _audit(rep, "mean index > 2", slack > 0, slack)
    ratios = [p.mean_index / c.action for c, p in zip(chars, profs)]
    spread = (max(ratios) - min(ratios)) / float(np.mean(ratios))
    _audit(rep, "mean index / action constant across orbits", spread <= tol.ratio, spread)
    slack = min(p.i(1) - n for p in profs)
    _audit(rep, "i(y,1) >= n", slack >= 0, slack)
    _audit(rep, "2 S+ >= 2", all(p.S_plus >= 1 for p in profs), min(2 * p.S_plus - 2 for p in profs))
    _audit(rep, "elliptic height even", all(p.elliptic_height % 2 == 0 for p in profs))
    sym = [(c, p) for c, p in zip(chars, profs) if c.symmetric_orbit]
    if sym:
        slack = min(p.i(1) + 2 * p.S_plus - p.nu(1) - n for _, p in sym)
        _audit(rep, "symmetric orbits: i1 + 2S+ - nu1 >= n", slack >= 0, slack)
    mono = min(p.i(m + 1) - p.i(m) for p in profs for m in range(1, rep.config.m_max))
    _audit(rep, "i(y,m) strictly increasing", mono > 0, mono)
    if rep.cross_check:
        worst = max((x["rel_error"] if x["rel_error"] is not None else np.inf) for x in rep.cross_check)
        _audit(rep, "closed-form and dual-action actions agree", worst <= 1e-5, worst)

    for cp in cps:
        c = cp.recovered_orbit
        ref = phi_of_action(c.action, rep.config.alpha)
        err = abs(cp.phi_value - ref) / abs(ref)
        _audit(rep, f"{c.label}: Phi matches action", err <= 1e-6, err)
        prof = next((p for cc, p in zip(chars, profs) if abs(cc.action - c.action) <= 1e-5 * c.action), None)
        data = cp.diagnostics.get("morse_iterates") or [(cp.morse_index, cp.nullity)]
        if prof is None or data[0][0] is None:
            continue
        diffs = [(i_u - (prof.i(m) - n), nu_u - prof.nu(m)) for m, (i_u, nu_u) in enumerate(data, start=1)]
        ok = all(d == (0, 0) for d in diffs)
        _audit(rep, f"{c.label}: i(u^m) = i(y,m) - n and nu(u^m) = nu(y,m), m<={len(data)}", ok, 0 if ok else None,
               detail=None if ok else str(diffs))

    cert = rep.certificate
    if cert is not None:
        ledger_ok = all(x.verdict for t in cert.tuples for x in t.ledger)
        derived_ok = all(x.verdict for t in cert.tuples for x in t.derived)
        _audit(rep, f"jump tuples found ({len(cert.tuples)}) satisfy the jump conditions", ledger_ok,
               detail=str(cert.T_values))
        _audit(rep, "derived ledger", derived_ok)
        ok = True
        for t in cert.tuples:
            for s, m, chi in zip(sums, t.m, t.chi):
                M = cert.M_common
                fr = s.mean_index_fraction
                if fr is not None:
                    q = Fraction(t.T) / (M * fr)
                    ok &= q.denominator == 1 and chi == 0 and m == int(q) * M and 2 * m * fr == 2 * t.T
                else:
                    ok &= m == (math.floor(t.T / (M * s.mean_index)) + chi) * M
        _audit(rep, "m_j re-derived from T, M, mean index and chi", ok)
        part = cert.theta_partition
        if part is not None:
            lhs = 2 * len(part["Theta1"]) + len(part["Theta2"]) + len(part["Theta3"])
            _audit(rep, "2#Theta1 + #Theta2 + #Theta3 = n", lhs == n, lhs - n)
        t11 = cert.theorem_1_1 or {}
        if t11:
            _audit(rep, "non-hyperbolic lower bound >= n - 1", t11["nonhyperbolic_lower_bound"] >= n - 1,
                   t11["nonhyperbolic_lower_bound"] - (n - 1))
            for k, v in t11["claims"].items():
                _audit(rep, f"claim: {k}", v)
            _audit(rep, "classification confirms non-hyperbolic bound", t11["classification_confirms"],
                   t11["classified_nonhyperbolic"] - t11["nonhyperbolic_lower_bound"])
        t12 = cert.theorem_1_2 or {}
        if t12:
            _audit(rep, "elliptic lower bound consistent with classification", t12["passed"],
                   t12["classified_elliptic"] - t12["elliptic_lower_bound"], detail=t12["route"])
    return rep.audit


def write_outputs(rep: RunReport, out_dir: str, timestamp: str | None = None) -> dict:
    """Write ``report.json``, ``orbits.csv``, ``certificate.txt`` and trajectory CSVs."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {k: os.path.join(out_dir, k) for k in ("report.json", "orbits.csv", "certificate.txt")}
    with open(paths["report.json"], "w") as fh:
        json.dump(rep.to_json(timestamp), fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    cols = ["label", "method", "tau", "action", "phi", "i1", "nu1", "mean_index", "e", "S_plus",
            "classification", "symmetric"]
    with open(paths["orbits.csv"], "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        w.writerows(rep.orbits)
    with open(paths["certificate.txt"], "w") as fh:
        fh.write(render_certificate(rep))
    for c in rep.characteristics:
        p = os.path.join(out_dir, f"trajectory_{c.label}.csv")
        with open(p, "w", newline="") as fh:
            c.to_csv(fh)
        paths[f"trajectory_{c.label}.csv"] = p
    return paths


def render_certificate(rep: RunReport) -> str:
    buf = io.StringIO()
    buf.write(f"run status: {rep.status}\n")
    for e in rep.errors:
        buf.write(f"stage error [{e['stage']}] {e['type']}: {e['message']}\n")
    if rep.certificate is not None:
        buf.write("\n")
        buf.write(rep.certificate.text())
    buf.write("\nAUDIT\n")
    for a in rep.audit:
        slack = "" if a["slack"] is None else f" (slack {a['slack']:.6g})"
        buf.write(f"  [{a['verdict']}] {a['invariant']}{slack}\n")
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")
