"""Right-hand sides: the sphere control system and its ambient extensions.

f_sphere is the control-affine system on the unit sphere driven by the
tangent fields M1*B1 and B2.  f1 extends it to the open tube around the
sphere with a scalar normal-contraction channel v, and is zero outside the
tube.  f2 blends f1 with a free ambient drift w through the radial cutoff
phi, which kills the discontinuity of the zero extension.

All functions are pure and broadcast over batched inputs.
"""

from typing import NamedTuple

import numpy as np

from .geometry import SPHERE_TUBE, base_fields, bump_m1, norm3, phi


class ExtendedControl(NamedTuple):
    """Control ⟨u, v, w⟩ for the blended ambient system."""

    u: np.ndarray
    v: float
    w: np.ndarray


def f_sphere(x, u):
    """Tangent velocity M1(x)*B1(x)*u1 + B2(x)*u2 at a sphere point.

    Parameters
    ----------
    x : (..., 3) array, unit-norm rows
    u : (..., 2) array, control channels

    Returns
    -------
    (..., 3) array orthogonal to x.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    b1, b2 = base_fields(x)
    c1 = u[..., 0] * bump_m1(x)
    return c1[..., None] * b1 + u[..., 1][..., None] * b2


def f1(y, u, v, cfg=SPHERE_TUBE):
    """Tube extension: f_sphere at the base point plus normal contraction.

    Inside the open tube 1-omega < |y| < 1+omega this is
    f_sphere(y/|y|, u) + (y - y/|y|) * v; outside it is the zero vector,
    making f1 a total (discontinuous) function.
    """
    y = np.asarray(y, dtype=float)
    r = norm3(y)
    inside = (r > cfg.tube_inner) & (r < cfg.tube_outer)
    # keep the base-point division well defined where the mask is False
    base = y / np.where(inside, r, 1.0)[..., None]
    out = f_sphere(base, u) + (y - base) * np.asarray(v, dtype=float)[..., None]
    return np.where(inside[..., None], out, 0.0)


def f2(z, u, v, w, cfg=SPHERE_TUBE):
    """Blended ambient field phi(z)*f1(z, u, v) + (1 - phi(z))*w.

    phi is exactly 1 on the sharp shell (where f2 reproduces f1) and
    exactly 0 outside the kept shell (where f2 is the free drift w), so the
    zero extension inside f1 is never sampled with nonzero weight and f2 is
    locally Lipschitz.
    """
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    blend = phi(z, cfg)[..., None]
    return blend * f1(z, u, v, cfg) + (1.0 - blend) * w
