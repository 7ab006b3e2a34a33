"""Numerical tolerances, threaded explicitly through every computation."""

from dataclasses import dataclass, fields, replace
import math


@dataclass(frozen=True)
class Tolerances:
    # symplectic linear algebra
    sympl: float = 1e-9
    circle: float = 1e-8
    cluster: float = 1e-5
    rank: float = 1e-7
    cluster_gap: float = 1e-6
    # path index
    deg: float = 1e-9
    arc_eps: float = 1e-5
    phase_step: float = math.pi / 4
    max_depth: int = 14
    step_cap: float = 0.5
    # iteration
    split_eps: float = 0.05
    split_eps_min: float = 1e-4
    q_max: int = 64
    rat: float = 1e-9
    fit: float = 0.5
    # hypersurface
    energy: float = 1e-9
    orbit: float = 1e-7
    sym: float = 1e-6
    sym_gap: float = 1e-3
    drift_cap: float = 1e-6
    x_min: float = 1e-12
    ode_rtol: float = 1e-12
    ode_atol: float = 1e-13
    resymplectify_every: int = 16
    # dual action
    g_tol: float = 1e-8
    eig_tol: float = 1e-7
    dup_tol: float = 1e-4
    ratio: float = 1e-4

    def with_overrides(self, overrides):
        known = {f.name for f in fields(self)}
        bad = set(overrides) - known
        if bad:
            raise KeyError(f"unknown tolerance keys: {sorted(bad)}")
        return replace(self, **overrides)

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


DEFAULT = Tolerances()
