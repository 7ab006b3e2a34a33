import json

import numpy as np
import pytest
from conftest import diamond_func, path_of, random_linear_path, rot_func, shear_func

from closedchar.pathindex import (
    SymplecticPath,
    catenate,
    d_omega,
    iterate_path,
    omega_index,
    special_path_xi,
)
from closedchar.symplectic import hyperbolic_d, identity, nu_omega, random_symplectic, rotation


def crossing_count_rotation(theta):
    """Index of ``t -> R(t theta)``, ``t in [0, 1]``, from the eigen-angle count.

    Each full turn contributes 2; a partial turn adds 1 and a landing exactly
    on a multiple of ``2 pi`` (degenerate endpoint) adds nothing more.
    """
    k, rem = divmod(theta, 2 * np.pi)
    return int(2 * k + (1 if rem > 1e-12 else -1))


class TestDOmega:
    def test_identity_degenerate(self):
        assert d_omega(identity(1), 1.0) == 0.0

    def test_hyperbolic(self):
        assert d_omega(hyperbolic_d(2), 1.0) == pytest.approx(-0.5)

    def test_rotation_at_minus_one(self):
        m = np.asarray(rotation(np.pi / 2))
        direct = (-1) ** 0 * np.conj(-1.0) * np.linalg.det(m + np.eye(2))
        assert d_omega(m, -1.0) == pytest.approx(direct.real)

    def test_real_on_random(self, rng):
        for _ in range(10):
            m = random_symplectic(2, rng)
            w = np.exp(1j * rng.uniform(0, 2 * np.pi))
            assert np.isfinite(d_omega(m, w))


class TestSpecialPath:
    def test_endpoints(self):
        p = special_path_xi(1, 2.0)
        assert np.allclose(p.matrices[0], np.diag([2.0, 0.5]))
        assert np.allclose(p.matrices[-1], np.eye(2))

    def test_nondegenerate_before_end(self):
        p = special_path_xi(2, 1.0, num=401)
        d = np.array([d_omega(m, 1.0) for m in p.matrices[:-1]])
        # (1 - lam)^2 (1 - 1/lam)^2 per plane: vanishes only at the end, no sign change
        lam = 2.0 - p.times[:-1]
        assert np.all(d < 0)
        assert np.allclose(d, -(((lam - 1) * (1 / lam - 1)) ** 2), rtol=1e-9, atol=1e-15)


class TestOmegaIndex:
    def test_quarter_rotation(self):
        r = omega_index(path_of(rot_func(np.pi / 2)))
        assert (r.index, r.nullity) == (1, 0)

    @pytest.mark.parametrize("theta", [0.3, np.pi / 2, 3.0, 5.0, 7.0, 2 * np.pi, 4 * np.pi, 13.0])
    def test_rotation_oracle(self, theta):
        r = omega_index(path_of(rot_func(theta)))
        assert r.index == crossing_count_rotation(theta)

    def test_full_turn_degenerate(self):
        r = omega_index(path_of(rot_func(2 * np.pi)))
        assert (r.index, r.nullity) == (1, 2) and r.degenerate_endpoint

    def test_shears(self):
        assert omega_index(path_of(shear_func(1.0))).index == -1
        assert omega_index(path_of(shear_func(-1.0))).index == 0

    def test_nullity_matches_endpoint(self, rng):
        for _ in range(100):
            n = int(rng.integers(1, 3))
            p = random_linear_path(rng, n)
            w = np.exp(1j * rng.uniform(0, 2 * np.pi))
            assert omega_index(p, w).nullity == nu_omega(p.endpoint, w)

    def test_conjugation_symmetry(self, rng):
        for _ in range(10):
            p = random_linear_path(rng, 2)
            w = np.exp(1j * rng.uniform(0.1, 3.0))
            assert omega_index(p, w).index == omega_index(p, np.conj(w)).index

    def test_grid_refinement_invariance(self, rng):
        for _ in range(5):
            p = random_linear_path(rng, 2)
            fine = SymplecticPath(1.0, func=p.func, grid=np.linspace(0, 1, 513))
            assert omega_index(p).index == omega_index(fine).index

    def test_frame_change_invariance(self, rng):
        for _ in range(5):
            p = random_linear_path(rng, 2)
            q = np.asarray(random_symplectic(2, rng, scale=0.4))
            qi = np.linalg.inv(q)
            conj = path_of(lambda ts, f=p.func: qi @ f(ts) @ q)
            a, b = omega_index(p), omega_index(conj)
            assert (a.index, a.nullity) == (b.index, b.nullity)

    def test_diamond_additivity(self):
        f1, f2 = rot_func(2.0), rot_func(9.0)
        total = omega_index(path_of(diamond_func(f1, f2))).index
        assert total == omega_index(path_of(f1)).index + omega_index(path_of(f2)).index


class TestIteratePath:
    def test_identity_iterate(self, rng):
        p = random_linear_path(rng, 1)
        q = iterate_path(p, 1)
        assert np.array_equal(q.matrices, p.matrices)

    def test_endpoint_power(self, rng):
        p = random_linear_path(rng, 2)
        e = np.asarray(p.endpoint)
        assert np.allclose(np.asarray(iterate_path(p, 3).endpoint), e @ e @ e, atol=1e-8)

    def test_rotation_group(self):
        theta = 1.1
        q = iterate_path(path_of(rot_func(theta)), 4)
        assert q.tau == pytest.approx(4.0)
        ts = q.times
        assert np.allclose(q.matrices, rot_func(theta)(ts), atol=1e-12)

    def test_catenate(self):
        a = path_of(rot_func(1.0))
        c = catenate(a, a)
        assert np.allclose(np.asarray(c.endpoint), np.asarray(rotation(2.0)), atol=1e-12)


def test_path_json_round_trip(rng):
    p = random_linear_path(rng, 1)
    back = SymplecticPath.from_json(json.loads(json.dumps(p.to_json())))
    assert np.array_equal(back.matrices, p.matrices)
    assert omega_index(back).index == omega_index(p).index


def test_path_must_start_at_identity():
    with pytest.raises(ValueError):
        SymplecticPath(1.0, samples=[(0.0, 2 * np.eye(2)), (1.0, np.eye(2))])
