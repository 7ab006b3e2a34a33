import io

import numpy as np
import pytest
from conftest import R2

from closedchar.errors import DegenerateRadii, OriginSingularity, SymmetryAmbiguous
from closedchar.hypersurface import (
    ClosedCharacteristic,
    Ellipsoid,
    GaugeTableBody,
    action_of_trajectory,
    body_from_spec,
    characteristic_from_orbit,
    detect_symmetric,
    ellipsoid_characteristics,
    flow_orbit,
    hamiltonian_alpha,
    hamiltonian_hessian,
)
from closedchar.symplectic import elliptic_height, nu_omega, symplectic_residual, unit_circle_spectrum

ALPHA = 1.5


def fd_grad(f, x, h=1e-6):
    e = np.eye(x.size)
    return np.array([(f(x + h * v) - f(x - h * v)) / (2 * h) for v in e])


class TestHamiltonian:
    def test_value_one_on_surface(self):
        body = Ellipsoid((1.0, 1.0))
        x = np.array([0.6, 0.0, 0.8, 0.0])
        assert hamiltonian_alpha(body, ALPHA, x)[0] == pytest.approx(1.0)

    def test_gradient_and_hessian_fd(self, rng):
        for body in (Ellipsoid(R2), GaugeTableBody.quartic((1.0, 1.2, 1.0, 1.2), 0.3)):
            for _ in range(5):
                x = rng.normal(size=4)
                val, g = hamiltonian_alpha(body, ALPHA, x)
                assert np.allclose(g, fd_grad(lambda z: hamiltonian_alpha(body, ALPHA, z)[0], x), rtol=1e-6, atol=1e-8)
                hnum = np.array([fd_grad(lambda z, i=i: hamiltonian_alpha(body, ALPHA, z)[1][i], x) for i in range(4)])
                assert np.allclose(hamiltonian_hessian(body, ALPHA, x), hnum, rtol=1e-5, atol=1e-6)

    def test_homogeneity(self, rng):
        body = Ellipsoid(R2)
        x = rng.normal(size=4)
        assert hamiltonian_alpha(body, ALPHA, 2.5 * x)[0] == pytest.approx(2.5**ALPHA * hamiltonian_alpha(body, ALPHA, x)[0])

    def test_origin(self):
        with pytest.raises(OriginSingularity):
            hamiltonian_alpha(Ellipsoid(R2), ALPHA, np.zeros(4))

    def test_body_spec(self):
        b = body_from_spec({"kind": "ellipsoid", "radii": [1.0, 2.0]})
        assert b.n == 2 and np.allclose(b.radii, [1.0, 2.0])


class TestFlow:
    def test_round_ellipsoid_circle(self):
        # on the unit sphere the flow is y' = alpha J y, a rotation with period 2 pi / alpha
        body = Ellipsoid((1.0, 1.0))
        x0 = np.array([0.6, 0.0, 0.0, 0.8])
        tau = 2 * np.pi / ALPHA
        traj = flow_orbit(body, ALPHA, x0, tau)
        ts = np.linspace(0, tau, 17)
        J = np.block([[np.zeros((2, 2)), -np.eye(2)], [np.eye(2), np.zeros((2, 2))]])
        want = np.array([(np.cos(ALPHA * t) * np.eye(4) + np.sin(ALPHA * t) * J) @ x0 for t in ts])
        assert np.allclose(traj(ts), want, atol=1e-9)

    def test_energy_pinned(self):
        body = Ellipsoid(R2)
        x0 = np.array([0.5, 0.3, 0.4, 0.2])
        x0 /= body.gauge(x0)
        traj = flow_orbit(body, ALPHA, x0, 10.0)
        ys = traj(np.linspace(0, 10, 400))
        assert np.max(np.abs(body.gauge(ys) ** ALPHA - 1)) <= 1e-9

    def test_time_reversal(self):
        body = Ellipsoid(R2)
        x0 = np.array([0.5, 0.3, 0.4, 0.2])
        x0 /= body.gauge(x0)
        tau = 5.0
        xt = flow_orbit(body, ALPHA, x0, tau)(np.array([tau]))[0]
        # reversing time is the flow of -H, i.e. conjugation by q -> q, p -> -p
        flip = np.diag([1, 1, -1, -1.0])
        back = flip @ flow_orbit(body, ALPHA, flip @ xt, tau)(np.array([tau]))[0]
        assert np.linalg.norm(back - x0) <= 1e-7


class TestEllipsoidCharacteristics:
    def test_two_planes(self):
        chars = ellipsoid_characteristics((1.0, np.sqrt(2)))
        assert len(chars) == 2 and all(c.symmetric_orbit for c in chars)
        assert chars[0].action / chars[1].action == pytest.approx(0.5)

    def test_actions_are_areas(self):
        for c, r in zip(ellipsoid_characteristics(R2), R2):
            assert c.action == pytest.approx(np.pi * r**2)
            assert action_of_trajectory(c.trajectory, c.tau) == pytest.approx(np.pi * r**2, rel=1e-12)

    def test_monodromy_multipliers(self):
        chars = ellipsoid_characteristics(R2)
        for j, c in enumerate(chars):
            assert symplectic_residual(c.monodromy) <= 1e-9
            assert elliptic_height(c.monodromy) == 4
            assert nu_omega(c.monodromy, 1.0) >= 1
            k = 1 - j
            rho = R2[j] ** 2 / R2[k] ** 2
            angles = sorted(abs(e.angle) for e in unit_circle_spectrum(c.monodromy).entries)
            want = abs(np.angle(np.exp(2j * np.pi * rho)))
            assert any(abs(a - want) < 1e-7 for a in angles)
            c.validate(Ellipsoid(R2))

    def test_degenerate_radii(self):
        with pytest.raises(DegenerateRadii):
            ellipsoid_characteristics((1.0, 1.0))

    def test_csv(self):
        buf = io.StringIO()
        ellipsoid_characteristics(R2)[0].to_csv(buf, num=8)
        lines = buf.getvalue().strip().splitlines()
        assert lines[0] == "t,y1,y2,y3,y4" and len(lines) == 9


class TestSymmetry:
    def test_planar_circle_symmetric(self):
        body = Ellipsoid(R2)
        for c in ellipsoid_characteristics(R2):
            assert detect_symmetric(c, body)

    def test_phase_shift_invariant(self):
        body = Ellipsoid(R2)
        c = ellipsoid_characteristics(R2)[1]
        shifted = ClosedCharacteristic(
            tau=c.tau, trajectory=lambda t: c.trajectory(np.asarray(t) + 0.37 * c.tau), action=c.action,
            monodromy=c.monodromy, path=c.path, symmetric_orbit=True, label="s",
        )
        assert detect_symmetric(shifted, body)

    def _offset_circle(self, offset):
        tau = 1.0

        def traj(t):
            t = np.asarray(t, dtype=float)
            y = np.zeros(t.shape + (4,))
            y[..., 0] = offset + 0.1 * np.cos(2 * np.pi * t)
            y[..., 2] = 0.1 * np.sin(2 * np.pi * t)
            return y

        c = ellipsoid_characteristics(R2)[0]
        return ClosedCharacteristic(tau=tau, trajectory=traj, action=0.0, monodromy=c.monodromy, path=c.path,
                                    symmetric_orbit=False, label="off")

    def test_non_antipodal_orbit(self):
        assert detect_symmetric(self._offset_circle(0.5), Ellipsoid(R2)) is False

    def test_ambiguous(self):
        with pytest.raises(SymmetryAmbiguous):
            detect_symmetric(self._offset_circle(0.05), Ellipsoid(R2))


def test_integrated_matches_closed_form():
    body = Ellipsoid(R2)
    ref = ellipsoid_characteristics(R2)[1]
    x0 = ref.trajectory(np.array([0.0]))[0] * (1 + 1e-4)
    c = characteristic_from_orbit(body, ALPHA, x0, ref.tau * (1 + 1e-4), "y2")
    assert c.tau == pytest.approx(ref.tau, rel=1e-9)
    assert c.action == pytest.approx(ref.action, rel=1e-9)
    assert c.symmetric_orbit
    assert np.allclose(np.asarray(c.monodromy), np.asarray(ref.monodromy), atol=1e-7)
    c.validate(body)
