"""Dynamics oracles: frozen field values, tangency, linearity, blend exactness."""

import math

import numpy as np
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from spherestab import dynamics, geometry

RNG = np.random.default_rng(1234)


def random_unit(n):
    v = RNG.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _smoothstep_oracle(t):
    # independently coded C-inf step for the blend oracle
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    ga = math.exp(-1.0 / t)
    gb = math.exp(-1.0 / (1.0 - t))
    return ga / (ga + gb)


def _phi_oracle(z):
    s = float(np.dot(z, z))
    a, b = (13 / 16) ** 2, (7 / 8) ** 2
    c, d = (9 / 8) ** 2, (19 / 16) ** 2
    return _smoothstep_oracle((s - a) / (b - a)) * _smoothstep_oracle((d - s) / (d - c))


class TestFSphere:
    def test_vanishes_at_poles(self):
        for pole in (geometry.Q, -geometry.Q):
            for u in ([1.0, 0.0], [0.0, 1.0], [0.3, -2.0]):
                assert_array_equal(dynamics.f_sphere(pole, np.array(u)), np.zeros(3))

    def test_hand_evaluated_at_r(self):
        # M1(r) = 1 and B1(r) = q, so u = <1,0> gives q
        assert_array_equal(dynamics.f_sphere(geometry.R, np.array([1.0, 0.0])), geometry.Q)
        # u = <0,1> gives r x q = (1, 0, 0)
        assert_array_equal(
            dynamics.f_sphere(geometry.R, np.array([0.0, 1.0])), np.array([1.0, 0.0, 0.0])
        )

    def test_tangency_sampled(self):
        x = random_unit(10_000)
        u = RNG.normal(size=(10_000, 2))
        vel = dynamics.f_sphere(x, u)
        assert np.max(np.abs(geometry.dot3(vel, x))) <= 1e-12

    def test_norm_bound(self):
        # |f| <= sqrt(1 - x3^2) * |u| <= |u| since the columns are orthogonal
        x = random_unit(10_000)
        u = RNG.normal(size=(10_000, 2))
        vel = dynamics.f_sphere(x, u)
        assert np.all(
            geometry.norm3(vel) <= np.sqrt(u[:, 0] ** 2 + u[:, 1] ** 2) + 1e-12
        )

    @given(
        st.floats(-3, 3), st.floats(-3, 3),
        st.floats(-3, 3), st.floats(-3, 3),
        st.floats(-2, 2), st.floats(-2, 2),
    )
    def test_linearity_in_u(self, u1, u2, w1, w2, a, b):
        x = geometry.sphere_project([0.3, -0.5, 0.81])
        u = np.array([u1, u2])
        w = np.array([w1, w2])
        lhs = dynamics.f_sphere(x, a * u + b * w)
        rhs = a * dynamics.f_sphere(x, u) + b * dynamics.f_sphere(x, w)
        assert_allclose(lhs, rhs, rtol=0, atol=1e-13)


class TestF1:
    def test_on_manifold_matches_f_sphere(self):
        x = random_unit(1000)
        u = RNG.normal(size=(1000, 2))
        out = dynamics.f1(x, u, 0.0)
        assert_allclose(out, dynamics.f_sphere(x, u), rtol=0, atol=1e-14)

    def test_normal_term_only(self):
        out = dynamics.f1(np.array([1.1, 0.0, 0.0]), np.zeros(2), -1.0)
        assert_allclose(out, [-0.1, 0.0, 0.0], rtol=0, atol=1e-15)

    def test_zero_outside_tube(self):
        for y in ([2.0, 0.0, 0.0], [0.1, 0.2, 0.0], [0.75, 0.0, 0.0], [1.25, 0.0, 0.0]):
            assert_array_equal(
                dynamics.f1(np.array(y), np.array([1.0, 1.0]), 5.0), np.zeros(3)
            )

    def test_radial_rate_is_normal_radius_times_v(self):
        # d|y|/dt = ydot . yhat = v * (|y| - 1) exactly along f1
        y = random_unit(1000) * RNG.uniform(0.8, 1.2, 1000)[:, None]
        u = RNG.normal(size=(1000, 2))
        v = RNG.normal(size=1000)
        ydot = dynamics.f1(y, u, v)
        radial = geometry.dot3(ydot, y / geometry.norm3(y)[:, None])
        assert_allclose(radial, v * (geometry.norm3(y) - 1.0), rtol=0, atol=1e-12)


class TestF2:
    def test_agrees_with_f1_on_sharp_shell(self):
        y = random_unit(2000) * RNG.uniform(7 / 8, 9 / 8, 2000)[:, None]
        u = RNG.normal(size=(2000, 2))
        v = RNG.normal(size=2000)
        w = RNG.normal(size=(2000, 3))
        assert_array_equal(dynamics.f2(y, u, v, w), dynamics.f1(y, u, v))

    def test_equals_w_outside_kept_shell(self):
        radii = np.concatenate([RNG.uniform(0, 13 / 16, 1000), RNG.uniform(19 / 16, 4, 1000)])
        z = random_unit(2000) * radii[:, None]
        u = RNG.normal(size=(2000, 2))
        w = RNG.normal(size=(2000, 3))
        assert_array_equal(dynamics.f2(z, u, 1.0, w), w)

    def test_blend_matches_independent_oracle(self):
        # transition radius 0.84 sits strictly between 13/16 and 7/8
        for _ in range(200):
            d = RNG.normal(size=3)
            z = 0.84 * d / np.linalg.norm(d)
            u = RNG.normal(size=2)
            v = float(RNG.normal())
            w = RNG.normal(size=3)
            ph = _phi_oracle(z)
            assert 0.0 < ph < 1.0
            expected = ph * dynamics.f1(z, u, v) + (1.0 - ph) * w
            assert_allclose(dynamics.f2(z, u, v, w), expected, rtol=0, atol=1e-14)

    def test_no_jump_across_tube_boundary(self):
        # phi vanishes near |z| = 3/4, so f2 = w on both sides: difference is 0
        d = random_unit(1000)
        u = RNG.normal(size=(1000, 2))
        v = RNG.normal(size=1000)
        w = RNG.normal(size=(1000, 3))
        eps = 1e-6
        inner = dynamics.f2(d * (0.75 - eps), u, v, w)
        outer = dynamics.f2(d * (0.75 + eps), u, v, w)
        quotient = geometry.norm3(outer - inner) / (2 * eps)
        assert np.max(quotient) < 10.0

    def test_extended_control_tuple(self):
        c = dynamics.ExtendedControl(np.array([1.0, 0.0]), 0.5, np.zeros(3))
        z = np.array([1.05, 0.0, 0.0])
        assert_array_equal(dynamics.f2(z, *c), dynamics.f2(z, c.u, c.v, c.w))
