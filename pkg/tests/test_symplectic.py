import json

import numpy as np
import pytest

from closedchar.errors import SymplecticViolation
from closedchar.symplectic import (
    SymplecticMatrix,
    diamond,
    diamond_power,
    elliptic_height,
    hyperbolic_d,
    identity,
    make_symplectic,
    n1,
    normal_form_decompose,
    nu_omega,
    random_symplectic,
    rationality,
    rotation,
    standard_j,
    unit_circle_spectrum,
)


def conj(m, p):
    p = np.asarray(p)
    return make_symplectic(np.linalg.inv(p) @ np.asarray(m) @ p, tol=1e-7)


class TestMakeSymplectic:
    def test_identity_has_zero_residual(self):
        m = make_symplectic(np.eye(4))
        assert m.residual == 0.0 and m.n == 2

    def test_j_is_symplectic(self):
        make_symplectic(standard_j(2))

    def test_rejects_diag_2_1_1_1(self):
        with pytest.raises(SymplecticViolation):
            make_symplectic(np.diag([2.0, 1.0, 1.0, 1.0]))

    def test_rejects_odd_shape(self):
        with pytest.raises(ValueError):
            make_symplectic(np.eye(3))

    def test_json_round_trip_is_binary_exact(self, rng):
        m = random_symplectic(2, rng)
        back = SymplecticMatrix.from_json(json.loads(json.dumps(m.to_json())))
        assert np.array_equal(np.asarray(back), np.asarray(m))


class TestDiamond:
    def test_block_positions(self):
        a, b = np.asarray(n1(1, 1)), np.asarray(rotation(np.pi / 3))
        d = np.asarray(diamond(a, b))
        # first factor occupies rows/cols {0, 2}, second {1, 3}
        assert np.array_equal(d[np.ix_([0, 2], [0, 2])], a)
        assert np.array_equal(d[np.ix_([1, 3], [1, 3])], b)
        assert np.all(d[np.ix_([0, 2], [1, 3])] == 0)

    def test_identity_blocks(self):
        assert np.array_equal(np.asarray(diamond(identity(1), identity(1))), np.eye(4))

    def test_spectrum_is_union(self, rng):
        for _ in range(10):
            a, b = random_symplectic(1, rng), random_symplectic(1, rng)
            got = np.sort_complex(np.linalg.eigvals(np.asarray(diamond(a, b))))
            want = np.sort_complex(np.r_[np.linalg.eigvals(np.asarray(a)), np.linalg.eigvals(np.asarray(b))])
            assert np.allclose(got, want, atol=1e-10)

    def test_associative(self, rng):
        a, b, c = (random_symplectic(1, rng) for _ in range(3))
        assert np.array_equal(np.asarray(diamond(diamond(a, b), c)), np.asarray(diamond(a, diamond(b, c))))

    def test_power(self):
        assert diamond_power(rotation(1.0), 3).n == 3


class TestSpectrum:
    def test_rotation(self):
        s = unit_circle_spectrum(rotation(np.pi / 3))
        angles = sorted(np.angle(e.omega) for e in s.entries)
        assert np.allclose(angles, [-np.pi / 3, np.pi / 3])
        assert all(e.alg_mult == 1 and e.nu == 1 for e in s.entries)
        assert s.off_circle_count == 0

    def test_hyperbolic_is_off_circle(self):
        s = unit_circle_spectrum(hyperbolic_d(2))
        assert len(s.entries) == 0 and s.off_circle_count == 2

    def test_n1_jordan_block(self):
        s = unit_circle_spectrum(n1(1, 1))
        assert len(s.entries) == 1
        e = s.entries[0]
        assert e.omega == 1 and e.alg_mult == 2 and e.nu == 1

    def test_counts_add_up(self, rng):
        for n in (1, 2, 3):
            m = random_symplectic(n, rng)
            s = unit_circle_spectrum(m)
            assert sum(e.alg_mult for e in s.entries) + s.off_circle_count == 2 * n
            assert all(1 <= e.nu <= e.alg_mult for e in s.entries)

    def test_nullity_conjugate_symmetric(self):
        m = diamond(rotation(0.7), n1(1, 1))
        w = np.exp(0.7j)
        assert nu_omega(m, w) == nu_omega(m, np.conj(w)) == 1
        assert nu_omega(m, 1.0) == 1

    def test_conjugation_invariance(self, rng):
        m = diamond(n1(1, 1), rotation(np.sqrt(2)))
        for _ in range(5):
            c = conj(m, random_symplectic(2, rng, scale=0.3))
            assert elliptic_height(c) == elliptic_height(m) == 4
            assert nu_omega(c, 1.0) == 1
            assert nu_omega(c, np.exp(1j * np.sqrt(2))) == 1


class TestEllipticHeight:
    def test_identity(self):
        assert elliptic_height(identity(3)) == 6

    def test_hyperbolic_times_rotation(self):
        assert elliptic_height(diamond(hyperbolic_d(2), rotation(1.0))) == 2

    def test_hyperbolic_characteristic(self):
        for n in (2, 3):
            m = diamond(n1(1, 1), *[hyperbolic_d(2)] * (n - 1))
            assert elliptic_height(m) == 2

    def test_even_and_bounded(self, rng):
        for n in (1, 2, 3):
            e = elliptic_height(random_symplectic(n, rng))
            assert e % 2 == 0 and 0 <= e <= 2 * n


class TestNormalForm:
    def test_already_normal(self):
        nf = normal_form_decompose(diamond(n1(1, 1), rotation(np.sqrt(2))))
        kinds = sorted(f.kind for f in nf.factors)
        assert kinds == ["N1", "R"]
        assert (nf.p_minus, nf.p_zero, nf.p_plus) == (1, 0, 0)
        assert np.isclose(nf.rotation_angles[0] % (2 * np.pi), np.sqrt(2)) or np.isclose(
            2 * np.pi - nf.rotation_angles[0] % (2 * np.pi), np.sqrt(2)
        )

    def test_conjugated_keeps_invariants(self, rng):
        m = diamond(n1(1, 1), rotation(np.sqrt(2)))
        for _ in range(5):
            nf = normal_form_decompose(conj(m, random_symplectic(2, rng, scale=0.3)))
            assert (nf.p_minus, nf.p_zero, nf.p_plus) == (1, 0, 0)
            prod = nf.product()
            assert elliptic_height(prod) == 4
            assert nu_omega(prod, 1.0) == 1

    @pytest.mark.parametrize(
        "blocks,counts",
        [
            ([n1(1, 1)], (1, 0, 0)),
            ([n1(1, -1)], (0, 0, 1)),
            ([identity(1)], (0, 1, 0)),
            ([n1(1, 1), n1(1, -1)], (1, 0, 1)),
            ([identity(1), n1(1, 1), rotation(2.0)], (1, 1, 0)),
        ],
    )
    def test_eigenvalue_one_counts_and_nullity(self, blocks, counts, rng):
        m = diamond(*blocks)
        nf = normal_form_decompose(conj(m, random_symplectic(m.n, rng, scale=0.2)))
        assert (nf.p_minus, nf.p_zero, nf.p_plus) == counts
        assert nu_omega(m, 1.0) == counts[0] + 2 * counts[1] + counts[2]


class TestRationality:
    def test_half(self):
        r = rationality(0.5)
        assert r["rational"] and (r["p"], r["q"]) == (1, 2)

    def test_sqrt2_over_pi(self):
        assert not rationality(np.sqrt(2) / np.pi)["rational"]

    def test_denominator_cap(self):
        assert not rationality(1 / 169)["rational"]
        assert rationality(1 / 169, q_max=200)["rational"]
