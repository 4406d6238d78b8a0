"""Spherical and ambient geometry for the unit sphere embedded in R^3.

Distances, projections, geodesic directions, the base tangent fields B1/B2,
the bump function M1 that shapes the discontinuous feedback, the radial
blend phi used by the ambient extension, and tube membership utilities.

All functions broadcast over a trailing axis of length 3.  Inner products
are written out component-wise so that a row of a batched call is
bit-identical to the same point evaluated alone.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainError,
    ParameterError,
    TubeMembershipError,
    UndefinedDirectionError,
)

# Distinguished points: q is the attractor axis, r the auxiliary axis.
Q = np.array([0.0, 0.0, 1.0])
R = np.array([0.0, 1.0, 0.0])
ATTRACTOR = np.array([Q, -Q])
MARKED = np.array([Q, -Q, R, -R])

# Tolerance for accepting a vector as a sphere point.
UNIT_TOL = 1e-9

# Azimuth thresholds of the M1 window: the zero set of M1 lies between
# atan(1/4) and atan(3/4); the transition bands reach atan(1/8) and atan(7/8).
PSI_LO_OUT, PSI_LO_IN, PSI_HI_IN, PSI_HI_OUT = np.arctan([1 / 8, 1 / 4, 3 / 4, 7 / 8])

# Polar thresholds of M1: transition over V_q in (pi/8, pi/4).
POLAR_LO = np.pi / 8
POLAR_HI = np.pi / 4


def dot3(a, b):
    """Component-wise inner product over the trailing axis of length 3."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def norm3(a):
    """Euclidean norm over the trailing axis of length 3."""
    return np.sqrt(dot3(a, a))


def cross3(a, b):
    """Cross product over the trailing axis of length 3."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.empty(np.broadcast(a, b).shape)
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def require_unit(x, tol=UNIT_TOL, name="x"):
    """Validate that x is a sphere point within the unit-norm tolerance.

    Returns the input as a float array.  Raises DomainError otherwise.
    Trajectory states are re-validated with this check rather than being
    renormalized, so invariance drift stays measurable.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 3:
        raise DomainError(f"{name} must have a trailing axis of length 3")
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{name} has non-finite coordinates")
    err = np.abs(norm3(x) - 1.0)
    if np.any(err > tol):
        raise DomainError(
            f"{name} is off the unit sphere by {float(np.max(err)):.3e} (tol {tol:.1e})"
        )
    return x


@dataclass(frozen=True)
class TubeConfig:
    """Radii of the tubular neighborhood and its shells.

    omega is the (constant) tube half-width; eps = omega/2 is the attractor
    tube radius; [sharp_inner, sharp_outer] is the shell on which the blend
    is exactly 1; the complement of [comega_inner, comega_outer] is the
    region where the blend is exactly 0.
    """

    omega: float = 0.25
    eps: float = 0.125
    sharp_inner: float = 7 / 8
    sharp_outer: float = 9 / 8
    comega_inner: float = 13 / 16
    comega_outer: float = 19 / 16

    def __post_init__(self):
        if not 0.0 < self.eps <= self.omega / 2:
            raise ParameterError("TubeConfig requires 0 < eps <= omega/2")
        if not (1.0 - self.omega < self.sharp_inner < self.comega_outer):
            raise ParameterError("TubeConfig shells out of order")

    @property
    def tube_inner(self):
        return 1.0 - self.omega

    @property
    def tube_outer(self):
        return 1.0 + self.omega


SPHERE_TUBE = TubeConfig()


def smoothstep(t):
    """C-infinity step: exactly 0 for t <= 0, exactly 1 for t >= 1.

    Built from the mollifier g(t) = exp(-1/t) as g(t) / (g(t) + g(1-t)).
    """
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    a = np.where(t > 0.0, np.exp(-1.0 / np.where(t > 0.0, t, 1.0)), 0.0)
    b = np.where(t < 1.0, np.exp(-1.0 / np.where(t < 1.0, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def geodesic_distance(x, y):
    """Great-circle distance arccos(x . y), with the dot clamped to [-1, 1]."""
    return np.arccos(np.clip(dot3(x, y), -1.0, 1.0))


def sphere_project(y):
    """Radial projection y / |y| onto the sphere.  Undefined at the origin."""
    y = np.asarray(y, dtype=float)
    r = norm3(y)
    if np.any(r == 0.0):
        raise DomainError("sphere_project is undefined at the origin")
    return y / r[..., None]


def geodesic_direction(x, p):
    """Unit tangent at x pointing along the great circle toward p.

    Computed as the radial projection of p - (p.x)x.  Undefined when x is
    at or antipodal to p.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    d = geodesic_distance(x, p)
    if np.any(np.minimum(d, np.pi - d) <= UNIT_TOL):
        raise UndefinedDirectionError("geodesic direction undefined at x = +/-p")
    resid = p - dot3(p, x)[..., None] * x
    return resid / norm3(resid)[..., None]


def base_fields(x):
    """The tangent fields B1(x) = q - (x.q)x and B2(x) = x cross q.

    Both vanish exactly at x = +/-q; elsewhere they are orthogonal to x,
    to each other, and have equal norms sqrt(1 - x3^2).
    """
    x = np.asarray(x, dtype=float)
    x3 = x[..., 2]
    b1 = np.empty(x.shape)
    b1[..., 0] = -x3 * x[..., 0]
    b1[..., 1] = -x3 * x[..., 1]
    b1[..., 2] = 1.0 - x3 * x[..., 2]
    b2 = np.empty(x.shape)
    b2[..., 0] = x[..., 1]
    b2[..., 1] = -x[..., 0]
    b2[..., 2] = 0.0 * x3
    return b1, b2


def bump_m1(x):
    """Smooth bump M1 with exact zero and one plateaus.

    Zero exactly on the geodesic rectangle {x1/4 <= x2 <= 3x1/4, V_q >= pi/4}
    (azimuth between atan(1/4) and atan(3/4), polar distance from the nearer
    pole at least pi/4); one exactly on {x2 >= 7x1/8 or x2 <= x1/8 or
    V_q <= pi/8}.  The cutoffs are smoothsteps in the azimuth psi =
    atan2(x2, x1) and in V_q = arccos|x3|; the azimuth window is zero in a
    neighborhood of the atan2 branch cut, so the composition is smooth.
    """
    x = np.asarray(x, dtype=float)
    psi = np.arctan2(x[..., 1], x[..., 0])
    window = smoothstep((psi - PSI_LO_OUT) / (PSI_LO_IN - PSI_LO_OUT)) * smoothstep(
        (PSI_HI_OUT - psi) / (PSI_HI_OUT - PSI_HI_IN)
    )
    v_q = np.arccos(np.clip(np.abs(x[..., 2]), 0.0, 1.0))
    polar = smoothstep((v_q - POLAR_LO) / (POLAR_HI - POLAR_LO))
    return 1.0 - window * polar


def gamma_profile(s, cfg=SPHERE_TUBE):
    """Radial blend profile on the squared-radius axis.

    Exactly 1 for s in [sharp_inner^2, sharp_outer^2] and exactly 0 outside
    (comega_inner^2, comega_outer^2); C-infinity in between.
    """
    s = np.asarray(s, dtype=float)
    a, b = cfg.comega_inner**2, cfg.sharp_inner**2
    c, d = cfg.sharp_outer**2, cfg.comega_outer**2
    return smoothstep((s - a) / (b - a)) * smoothstep((d - s) / (d - c))


def phi(z, cfg=SPHERE_TUBE):
    """Blend phi(z) = Gamma(|z|^2): 1 on the sharp shell, 0 on the kept-shell complement."""
    z = np.asarray(z, dtype=float)
    return gamma_profile(dot3(z, z), cfg)


def in_tube(y, cfg=SPHERE_TUBE):
    """Boolean mask for strict tube membership 1 - omega < |y| < 1 + omega."""
    r = norm3(y)
    return (r > cfg.tube_inner) & (r < cfg.tube_outer)


def tube_decompose(y, cfg=SPHERE_TUBE):
    """Split a tube point into (nearest sphere point, normal offset).

    Returns (base, normal) with y = base + normal and normal parallel to
    base.  Raises TubeMembershipError outside the open tube.
    """
    y = np.asarray(y, dtype=float)
    if not np.all(in_tube(y, cfg)):
        raise TubeMembershipError(
            f"point outside the tube {cfg.tube_inner} < |y| < {cfg.tube_outer}"
        )
    base = sphere_project(y)
    return base, y - base


def tangent_basis(x):
    """Deterministic orthonormal tangent basis (t1, t2) at a sphere point.

    The reference axis is e_x where |x1| < 0.9 and e_y elsewhere, so the
    Gram-Schmidt step is always well conditioned.
    """
    x = np.asarray(x, dtype=float)
    use_ex = np.abs(x[..., 0]) < 0.9
    ref = np.zeros(x.shape)
    ref[..., 0] = np.where(use_ex, 1.0, 0.0)
    ref[..., 1] = np.where(use_ex, 0.0, 1.0)
    resid = ref - dot3(ref, x)[..., None] * x
    t1 = resid / norm3(resid)[..., None]
    t2 = cross3(x, t1)
    return t1, t2


def fibonacci_sphere(n, exclude=None, exclude_radius=1e-6):
    """Near-uniform deterministic point set on the sphere.

    Drops any point within geodesic exclude_radius of a row of exclude
    (used to keep grids away from the attractor poles and from +/-r where
    the decay rate mu degenerates).
    """
    if n <= 0:
        raise ParameterError("fibonacci_sphere needs n > 0")
    i = np.arange(n, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / n
    azimuth = (np.pi * (3.0 - np.sqrt(5.0))) * i
    s = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    pts = np.stack([s * np.cos(azimuth), s * np.sin(azimuth), z], axis=-1)
    if exclude is not None:
        exclude = np.asarray(exclude, dtype=float)
        d = geodesic_distance(pts[:, None, :], exclude[None, :, :])
        pts = pts[np.min(d, axis=1) > exclude_radius]
    return pts
