import numpy as np
import pytest
from conftest import R2

from closedchar.dual_action import (
    Loop,
    SolverBudget,
    action,
    fenchel_conjugate,
    fenchel_hessian,
    find_critical_points,
    gradient,
    loop_from_characteristic,
    morse_data,
    phi,
    phi_of_action,
    primitive_zero_mean,
)
from closedchar.hypersurface import Ellipsoid, GaugeTableBody, ellipsoid_characteristics, hamiltonian_alpha
from closedchar.iteration import IterationTable

ALPHA = 1.5


def random_loop(rng, n_modes, dim, decay=1.0):
    k = np.arange(1, n_modes + 1)[:, None]
    c = (rng.normal(size=(n_modes, dim)) + 1j * rng.normal(size=(n_modes, dim))) / k**decay
    return Loop(c)


class TestLoop:
    def test_cosine_primitive(self):
        c = np.zeros((4, 2), dtype=complex)
        c[0, 0] = 0.5  # u = (cos 2 pi t, 0)
        mu = primitive_zero_mean(Loop(c))
        t = np.linspace(0, 1, 33)
        assert np.allclose(mu(t)[:, 0], np.sin(2 * np.pi * t) / (2 * np.pi), atol=1e-14)
        assert np.allclose(mu(t)[:, 1], 0.0)

    def test_primitive_derivative(self, rng):
        u = random_loop(rng, 8, 4)
        mu = primitive_zero_mean(u)
        k = np.arange(1, 9)[:, None]
        back = Loop(mu.coefficients * 2j * np.pi * k)
        t = np.linspace(0, 1, 101)
        assert np.max(np.abs(back(t) - u(t))) <= 1e-10
        assert abs(mu.samples(64).mean(axis=0)).max() <= 1e-15

    def test_basis_round_trip(self, rng):
        u = random_loop(rng, 6, 4)
        v = Loop.from_basis(u.to_basis(), 6, 4)
        assert np.allclose(v.coefficients, u.coefficients)

    def test_samples_match_eval(self, rng):
        u = random_loop(rng, 5, 2)
        assert np.allclose(u.samples(32), u(np.arange(32) / 32), atol=1e-13)


class TestFenchel:
    def test_disk_closed_form(self):
        body = Ellipsoid((1.0,))
        for r in (0.3, 1.0, 2.7):
            y = np.array([r * 0.6, r * 0.8])
            # sup_s (s r - s^{3/2}) at s = (2r/3)^2
            s = (2 * r / 3) ** 2
            assert fenchel_conjugate(body, 1.5, y)[0] == pytest.approx(s * r - s**1.5, rel=1e-12)

    @pytest.mark.parametrize("body", [Ellipsoid(R2), GaugeTableBody.quartic((1.0, 1.2, 1.0, 1.2), 0.3)])
    def test_gradient_fd(self, body, rng):
        h = 1e-6
        for _ in range(5):
            y = rng.normal(size=4)
            g = fenchel_conjugate(body, ALPHA, y)[1]
            fd = np.array([(fenchel_conjugate(body, ALPHA, y + h * e)[0] - fenchel_conjugate(body, ALPHA, y - h * e)[0]) / (2 * h) for e in np.eye(4)])
            assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(g)

    def test_fenchel_young(self, rng):
        body = Ellipsoid(R2)
        for _ in range(10):
            x = rng.normal(size=4)
            hx, y = hamiltonian_alpha(body, ALPHA, x)
            assert abs(x @ y - hx - fenchel_conjugate(body, ALPHA, y)[0]) <= 1e-8

    def test_hessian_fd(self, rng):
        body = Ellipsoid(R2)
        y = rng.normal(size=4)
        h = 1e-6
        fd = np.array([(fenchel_conjugate(body, ALPHA, y + h * e)[1] - fenchel_conjugate(body, ALPHA, y - h * e)[1]) / (2 * h) for e in np.eye(4)])
        assert np.allclose(fenchel_hessian(body, ALPHA, y)[0], fd, rtol=1e-5, atol=1e-7)


class TestPhi:
    def test_zero_loop(self):
        assert phi(Loop(np.zeros((4, 4), dtype=complex)), Ellipsoid(R2), ALPHA) == 0.0

    def test_ground_truth_orbits(self):
        body = Ellipsoid(R2)
        for c in ellipsoid_characteristics(R2):
            u = loop_from_characteristic(c, 1, 16)
            want = phi_of_action(c.action, ALPHA)
            assert want < 0
            assert phi(u, body, ALPHA) == pytest.approx(want, rel=1e-6)
            g = gradient(u, body, ALPHA)
            assert np.abs(g.coefficients).max() <= 1e-8

    def test_directional_derivative(self, rng):
        body = Ellipsoid(R2)
        u = random_loop(rng, 8, 4)
        v = random_loop(rng, 8, 4)
        g = gradient(u, body, ALPHA).to_basis()
        h = 1e-6
        a, d = u.to_basis(), v.to_basis()
        fd = (phi(Loop.from_basis(a + h * d, 8, 4), body, ALPHA) - phi(Loop.from_basis(a - h * d, 8, 4), body, ALPHA)) / (2 * h)
        assert abs(g @ d - fd) <= 1e-5 * abs(fd)

    def test_s1_invariance(self, rng):
        body = Ellipsoid(R2)
        u = random_loop(rng, 6, 4, decay=2.0)
        base = phi(u, body, ALPHA)
        for theta in (0.1, 0.37, 0.5):
            assert phi(u.shifted(theta), body, ALPHA) == pytest.approx(base, rel=1e-10)


class TestMorse:
    def test_shift_identity_small(self):
        body = Ellipsoid(R2)
        for c in ellipsoid_characteristics(R2):
            tab = IterationTable(c.path)
            for m in (1, 2, 3):
                i_u, nu_u = morse_data(loop_from_characteristic(c, m, 16), body, ALPHA)
                assert (i_u, nu_u) == (tab.i(m) - 2, tab.nu(m))
                assert 1 <= nu_u <= 4


class TestAction:
    def test_circle_area(self):
        c = ellipsoid_characteristics((1.0, 1.7))[1]
        assert action(c) == pytest.approx(np.pi * 1.7**2, rel=1e-12)

    def test_double_cover(self):
        c = ellipsoid_characteristics(R2)[0]
        double = lambda t: c.trajectory(np.mod(np.asarray(t) * 1.0, c.tau))  # noqa: E731
        from closedchar.hypersurface import action_of_trajectory

        assert action_of_trajectory(double, 2 * c.tau) == pytest.approx(2 * action(c), abs=1e-9)


def test_solver_finds_both_orbits():
    body = Ellipsoid((1.0, 1.3))
    cps = find_critical_points(body, ALPHA, SolverBudget(restarts=8, n_modes=16, seed=0))
    want = sorted(c.action for c in ellipsoid_characteristics((1.0, 1.3)))
    got = sorted(cp.recovered_orbit.action for cp in cps)
    assert len(got) >= 2
    for a in want:
        assert min(abs(a - g) for g in got) <= 1e-5
    for cp in cps:
        assert cp.phi_value < 0
        cp.recovered_orbit.validate(body)
