"""Geometry oracles: frozen examples, sampled identities, plateau exactness."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from spherestab import geometry
from spherestab.errors import (
    DomainError,
    ParameterError,
    TubeMembershipError,
    UndefinedDirectionError,
)

RNG = np.random.default_rng(20260815)


def random_unit(n):
    v = RNG.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


unit_vectors = st.builds(
    lambda a, b: np.array(
        [math.cos(a) * math.sin(b), math.sin(a) * math.sin(b), math.cos(b)]
    ),
    st.floats(-math.pi, math.pi),
    st.floats(1e-3, math.pi - 1e-3),
)


class TestGeodesicDistance:
    def test_frozen_examples(self):
        assert geometry.geodesic_distance(geometry.Q, geometry.Q) == 0.0
        assert geometry.geodesic_distance(geometry.Q, -geometry.Q) == math.pi
        assert geometry.geodesic_distance(geometry.Q, geometry.R) == math.pi / 2

    def test_symmetry_and_range(self):
        x, y = random_unit(10_000), random_unit(10_000)
        dxy = geometry.geodesic_distance(x, y)
        assert_array_equal(dxy, geometry.geodesic_distance(y, x))
        assert np.all((dxy >= 0.0) & (dxy <= math.pi))

    def test_triangle_inequality_sampled(self):
        x, y, z = (random_unit(10_000) for _ in range(3))
        lhs = geometry.geodesic_distance(x, z)
        rhs = geometry.geodesic_distance(x, y) + geometry.geodesic_distance(y, z)
        assert np.all(lhs <= rhs + 1e-12)

    def test_clamping_absorbs_roundoff(self):
        # nearly parallel unit vectors whose dot can exceed 1 in floats
        x = random_unit(1000)
        d = geometry.geodesic_distance(x, x)
        assert np.all(np.isfinite(d))
        assert np.all(d < 1e-7)


class TestSphereProject:
    def test_frozen_examples(self):
        assert_array_equal(geometry.sphere_project([2.0, 0.0, 0.0]), [1.0, 0.0, 0.0])
        assert_allclose(
            geometry.sphere_project([0.6, 0.8, 0.0]), [0.6, 0.8, 0.0], rtol=0, atol=1e-15
        )

    def test_origin_rejected(self):
        with pytest.raises(DomainError):
            geometry.sphere_project([0.0, 0.0, 0.0])

    def test_result_unit(self):
        y = RNG.normal(size=(1000, 3)) * 10.0
        y = y[np.linalg.norm(y, axis=-1) > 1e-6]
        p = geometry.sphere_project(y)
        assert_allclose(geometry.norm3(p), 1.0, rtol=0, atol=1e-12)


class TestGeodesicDirection:
    def test_frozen_examples(self):
        assert_allclose(
            geometry.geodesic_direction(geometry.R, geometry.Q), geometry.Q, atol=1e-15
        )
        assert_allclose(
            geometry.geodesic_direction(geometry.R, -geometry.Q), -geometry.Q, atol=1e-15
        )

    def test_undefined_at_coincidence_and_antipode(self):
        with pytest.raises(UndefinedDirectionError):
            geometry.geodesic_direction(geometry.Q, geometry.Q)
        with pytest.raises(UndefinedDirectionError):
            geometry.geodesic_direction(geometry.Q, -geometry.Q)

    def test_tangency_and_unit_norm(self):
        x = random_unit(2000)
        keep = geometry.geodesic_distance(x, geometry.Q) > 1e-3
        keep &= geometry.geodesic_distance(x, -geometry.Q) > 1e-3
        x = x[keep]
        y = geometry.geodesic_direction(x, geometry.Q)
        assert_allclose(geometry.norm3(y), 1.0, rtol=0, atol=1e-12)
        assert_allclose(geometry.dot3(y, x), 0.0, rtol=0, atol=1e-12)

    @given(unit_vectors)
    def test_antisymmetry_in_target(self, x):
        d = geometry.geodesic_distance(x, geometry.Q)
        if min(d, math.pi - d) <= 1e-6:
            return
        plus = geometry.geodesic_direction(x, geometry.Q)
        minus = geometry.geodesic_direction(x, -geometry.Q)
        assert_allclose(plus, -minus, rtol=0, atol=1e-12)


class TestBaseFields:
    def test_vanish_at_poles(self):
        for pole in (geometry.Q, -geometry.Q):
            b1, b2 = geometry.base_fields(pole)
            assert_array_equal(b1, np.zeros(3))
            assert_array_equal(b2, np.zeros(3))

    def test_hand_evaluated_at_r(self):
        # B1(r) = q - (r.q) r = q;  B2(r) = r x q = (1, 0, 0)
        b1, b2 = geometry.base_fields(geometry.R)
        assert_array_equal(b1, geometry.Q)
        assert_array_equal(b2, np.array([1.0, 0.0, 0.0]))

    def test_sampled_orthogonality(self):
        x = random_unit(10_000)
        b1, b2 = geometry.base_fields(x)
        assert np.max(np.abs(geometry.dot3(b1, x))) <= 1e-12
        assert np.max(np.abs(geometry.dot3(b2, x))) <= 1e-12
        assert np.max(np.abs(geometry.dot3(b1, b2))) <= 1e-12

    def test_equal_norms(self):
        x = random_unit(10_000)
        b1, b2 = geometry.base_fields(x)
        expected = np.sqrt(np.clip(1.0 - x[:, 2] ** 2, 0.0, None))
        assert_allclose(geometry.norm3(b1), expected, rtol=0, atol=1e-12)
        assert_allclose(geometry.norm3(b2), expected, rtol=0, atol=1e-12)


class TestDirectionIdentities:
    """Inner products of the base fields with the geodesic direction to q."""

    def test_identities_on_fibonacci_grid(self):
        pts = geometry.fibonacci_sphere(10_000, exclude=geometry.ATTRACTOR)
        y_q = geometry.geodesic_direction(pts, geometry.Q)
        b1, b2 = geometry.base_fields(pts)
        target = np.sqrt(1.0 - pts[:, 2] ** 2)
        assert np.max(np.abs(geometry.dot3(b1, y_q) - target)) <= 1e-12
        assert np.max(np.abs(geometry.dot3(b2, y_q))) <= 1e-12


class TestSmoothstep:
    def test_plateaus_exact(self):
        t = np.array([-1.0, 0.0, 1.0, 2.0])
        assert_array_equal(geometry.smoothstep(t), [0.0, 0.0, 1.0, 1.0])

    def test_monotone_and_symmetric(self):
        t = np.linspace(-0.2, 1.2, 2001)
        s = geometry.smoothstep(t)
        assert np.all(np.diff(s) >= 0.0)
        assert np.all((s >= 0.0) & (s <= 1.0))
        assert_allclose(s + geometry.smoothstep(1.0 - t), 1.0, rtol=0, atol=1e-15)


class TestBumpM1:
    def test_frozen_examples(self):
        x = geometry.sphere_project([1.0, 0.5, 0.2])
        assert float(geometry.bump_m1(x)) == 0.0
        assert float(geometry.bump_m1(geometry.Q)) == 1.0
        assert float(geometry.bump_m1(geometry.sphere_project([1.0, 1.0, 0.0]))) == 1.0

    @staticmethod
    def _from_angles(psi, v_q, southern):
        x3 = np.where(southern, -np.cos(v_q), np.cos(v_q))
        s = np.sin(v_q)
        return np.stack([s * np.cos(psi), s * np.sin(psi), x3], axis=-1)

    def test_zero_set_exact(self):
        n = 1000
        psi = RNG.uniform(geometry.PSI_LO_IN + 1e-6, geometry.PSI_HI_IN - 1e-6, n)
        v_q = RNG.uniform(math.pi / 4 + 1e-6, math.pi / 2, n)
        x = self._from_angles(psi, v_q, RNG.random(n) < 0.5)
        assert_array_equal(geometry.bump_m1(x), np.zeros(n))

    def test_one_set_exact(self):
        n = 1000
        # azimuths outside the transition window, at polar angles up to pi/2
        psi = RNG.uniform(geometry.PSI_HI_OUT + 1e-6, 2 * math.pi + geometry.PSI_LO_OUT - 1e-6, n)
        psi = np.mod(psi + math.pi, 2 * math.pi) - math.pi
        v_q = RNG.uniform(0.0, math.pi / 2, n)
        x = self._from_angles(psi, v_q, RNG.random(n) < 0.5)
        assert_array_equal(geometry.bump_m1(x), np.ones(n))
        # low-polar cap inside the window azimuths is also exactly one
        psi = RNG.uniform(geometry.PSI_LO_OUT, geometry.PSI_HI_OUT, n)
        v_q = RNG.uniform(0.0, math.pi / 8 - 1e-6, n)
        x = self._from_angles(psi, v_q, RNG.random(n) < 0.5)
        assert_array_equal(geometry.bump_m1(x), np.ones(n))

    def test_range_and_transition(self):
        x = random_unit(10_000)
        m = geometry.bump_m1(x)
        assert np.all((m >= 0.0) & (m <= 1.0))
        # mid-band point sits strictly between the plateaus
        mid = self._from_angles(
            np.array((geometry.PSI_LO_OUT + geometry.PSI_LO_IN) / 2),
            np.array(3 * math.pi / 16),
            np.array(False),
        )
        assert 0.0 < float(geometry.bump_m1(mid)) < 1.0


class TestPhi:
    def test_frozen_examples(self):
        assert float(geometry.phi(np.array([1.0, 0.0, 0.0]))) == 1.0
        assert float(geometry.phi(np.array([2.0, 0.0, 0.0]))) == 0.0
        assert float(geometry.phi(np.zeros(3))) == 0.0

    def test_plateaus_exact_on_shells(self):
        radii = np.concatenate(
            [RNG.uniform(7 / 8, 9 / 8, 1000), [7 / 8, 9 / 8]]
        )
        d = random_unit(radii.size)
        assert_array_equal(geometry.phi(d * radii[:, None]), np.ones(radii.size))
        radii = np.concatenate([RNG.uniform(0, 13 / 16, 500), RNG.uniform(19 / 16, 3, 500)])
        d = random_unit(radii.size)
        assert_array_equal(geometry.phi(d * radii[:, None]), np.zeros(radii.size))

    def test_profile_derivative_bounded_on_bands(self):
        h = 1e-7
        s = np.concatenate(
            [
                np.linspace((13 / 16) ** 2 + 1e-4, (7 / 8) ** 2 - 1e-4, 2000),
                np.linspace((9 / 8) ** 2 + 1e-4, (19 / 16) ** 2 - 1e-4, 2000),
            ]
        )
        fd = (geometry.gamma_profile(s + h) - geometry.gamma_profile(s - h)) / (2 * h)
        assert np.all(np.isfinite(fd))
        assert np.max(np.abs(fd)) < 1e3


class TestTubeDecompose:
    def test_radial_split(self):
        base, normal = geometry.tube_decompose(np.array([1.1, 0.0, 0.0]))
        assert_array_equal(base, [1.0, 0.0, 0.0])
        assert_allclose(normal, [0.1, 0.0, 0.0], rtol=0, atol=1e-15)

    def test_on_manifold(self):
        base, normal = geometry.tube_decompose(np.array([1.0, 0.0, 0.0]))
        assert_array_equal(base, [1.0, 0.0, 0.0])
        assert_array_equal(normal, np.zeros(3))

    def test_membership_errors(self):
        for bad in ([0.5, 0.0, 0.0], [0.75, 0.0, 0.0], [1.25, 0.0, 0.0], [2.0, 0.0, 0.0]):
            with pytest.raises(TubeMembershipError):
                geometry.tube_decompose(np.array(bad))

    def test_reconstruction_and_parallelism(self):
        y = random_unit(1000) * RNG.uniform(0.76, 1.24, 1000)[:, None]
        base, normal = geometry.tube_decompose(y)
        assert_allclose(base + normal, y, rtol=0, atol=1e-15)
        assert np.max(np.abs(geometry.norm3(geometry.cross3(base, normal)))) <= 1e-12
        assert np.all(geometry.norm3(normal) < geometry.SPHERE_TUBE.omega)


class TestTubeConfig:
    def test_sphere_instance_values(self):
        cfg = geometry.SPHERE_TUBE
        assert cfg.omega == 0.25
        assert cfg.eps == 0.125
        assert (cfg.sharp_inner, cfg.sharp_outer) == (7 / 8, 9 / 8)
        assert (cfg.comega_inner, cfg.comega_outer) == (13 / 16, 19 / 16)
        assert 0 < cfg.eps <= cfg.omega / 2

    def test_invalid_rejected(self):
        with pytest.raises(ParameterError):
            geometry.TubeConfig(omega=0.25, eps=0.2)


class TestRequireUnit:
    def test_accepts_within_tolerance(self):
        geometry.require_unit(np.array([1.0 + 5e-10, 0.0, 0.0]))

    def test_rejects_off_sphere(self):
        with pytest.raises(DomainError):
            geometry.require_unit(np.array([1.0 + 1e-8, 0.0, 0.0]))
        with pytest.raises(DomainError):
            geometry.require_unit(np.array([np.nan, 0.0, 0.0]))


class TestFibonacciSphere:
    def test_unit_and_excludes_marked(self):
        pts = geometry.fibonacci_sphere(10_000, exclude=geometry.MARKED)
        assert pts.shape == (10_000, 3)
        assert np.max(np.abs(geometry.norm3(pts) - 1.0)) <= 1e-12
        d = geometry.geodesic_distance(pts[:, None, :], geometry.MARKED[None, :, :])
        assert np.min(d) > 1e-6

    def test_bad_n(self):
        with pytest.raises(ParameterError):
            geometry.fibonacci_sphere(0)


class TestTangentBasis:
    def test_orthonormal_frame(self):
        x = random_unit(5000)
        t1, t2 = geometry.tangent_basis(x)
        for t in (t1, t2):
            assert_allclose(geometry.norm3(t), 1.0, rtol=0, atol=1e-12)
            assert np.max(np.abs(geometry.dot3(t, x))) <= 1e-12
        assert np.max(np.abs(geometry.dot3(t1, t2))) <= 1e-12
