"""Stabilizing feedback on the sphere and open-loop extension schedules.

The feedback k_sphere is discontinuous: away from the transfer band it
pushes along meridians toward the nearer pole, on the band it rotates
westward until the band's bump factor releases the meridional channel.

The extension schedules steer the blended ambient field: a radial drift
brings an off-tube start into the kept shell, a normal-contraction gain v
squeezes the tube coordinate below p4/4, and a drift signal w copies the
tube field along a reference path so the blend cancels identically.
"""

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dynamics import f1
from .errors import DegenerateNearestPointError, ParameterError, TubeMembershipError
from .geometry import SPHERE_TUBE, bump_m1, in_tube, norm3, tube_decompose
from .sampling import PiTrajectory, _rk4_step, _substeps


def k_sphere(x):
    """Discontinuous stabilizing feedback; broadcasts over points.

    Returns (..., 2) controls: <+-1, 0> (meridional toward the nearer pole,
    northern branch on the equator) where the bump factor is exactly 1, and
    <0, 1> (westward) where it is below 1.
    """
    x = np.asarray(x, dtype=float)
    m1 = bump_m1(x)
    meridional = m1 >= 1.0
    u = np.empty(x.shape[:-1] + (2,))
    u[..., 0] = np.where(meridional, np.where(x[..., 2] >= 0.0, 1.0, -1.0), 0.0)
    u[..., 1] = np.where(meridional, 0.0, 1.0)
    return u


@dataclass(frozen=True)
class ProofBounds:
    """Constants sizing the extension schedules.

    p1 bounds the inner control norm, p2 is the normal-rate coefficient,
    p3 bounds the controlled sphere speed over the reference run, p4 is the
    kept-shell half-width and eps the target tube half-width; p5 bounds the
    drift signal over the whole schedule.
    """

    p1: float
    p2: float
    p3: float
    p4: float
    p5: float
    eps: float

    def __post_init__(self):
        for name in ("p1", "p2", "p3", "p4", "p5", "eps"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")

    @property
    def v_rate(self):
        """Normal contraction gain -p2*p3/(p4/4) used while v is active."""
        return -self.p2 * self.p3 / (self.p4 / 4.0)


def compute_bounds(reference, u_bound=1.0):
    """Schedule constants from a reference run (or a plain state array).

    p3 = 1 + u_bound * max sqrt(1 - x3^2) is maximized over the reference
    nodes after projecting them to the sphere; the tube constants are fixed
    by the construction (p2 = 1, p4 = 1/4, eps = 1/8).
    """
    states = reference.states if hasattr(reference, "states") else np.asarray(reference, dtype=float)
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if states.size == 0 or states.shape[-1] != 3:
        raise ParameterError("reference must supply at least one 3-d state")
    if not u_bound > 0:
        raise ParameterError("u_bound must be positive")
    r = norm3(states)
    if np.any(r <= 0) or not np.all(np.isfinite(r)):
        raise ParameterError("reference states must be finite and nonzero")
    x3 = states[..., 2] / r
    smax = float(np.max(np.clip(1.0 - x3 * x3, 0.0, None)))
    speed = u_bound * math.sqrt(smax)
    p3 = 1.0 + speed
    # drift bound: unit approach drift, then |f1| <= speed + |v| * (kept width)
    p5 = max(1.0, speed + (3.0 / 16.0) * (16.0 * p3))
    return ProofBounds(p1=float(u_bound), p2=1.0, p3=p3, p4=0.25, p5=p5, eps=0.125)


def v_schedule(eta, bounds, cfg=SPHERE_TUBE):
    """Normal-contraction schedule anchored at the tube entry state.

    Returns (T2, v) with v(t) = -p2*p3/(p4/4) for t < T2 and 0 after; the
    switch time T2 = max(0, (|pi_N(eta)| - p4/4)/p3) guarantees the normal
    radius is at most p4/4 when v shuts off.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (3,):
        raise ParameterError("entry state must be a single 3-d point")
    if not bool(in_tube(eta, cfg)):
        raise TubeMembershipError("entry state lies outside the open tube")
    _, normal = tube_decompose(eta, cfg)
    pn = float(norm3(normal))
    t2 = max(0.0, (pn - bounds.p4 / 4.0) / bounds.p3)
    rate = bounds.v_rate

    def v(t):
        t = np.asarray(t, dtype=float)
        return np.where(t < t2, rate, 0.0)[()]

    return t2, v


def w_schedule(y_path, u, v):
    """Drift signal copying the tube field along a reference path.

    y_path, u and v are callables of time; the returned w(t) equals
    f1(y_path(t), u(t), v(t)), which makes the blended field's drift term
    cancel against the tube term along the reference.
    """

    def w(t):
        return f1(np.asarray(y_path(t), dtype=float), np.asarray(u(t), dtype=float), float(np.asarray(v(t))))

    return w


def held_control(sample_times, held):
    """Step function freezing held[i] on [sample_times[i], sample_times[i+1])."""
    st = np.asarray(sample_times, dtype=float)
    hd = np.asarray(held, dtype=float)
    if len(st) == 0 or len(st) != len(hd):
        raise ParameterError("need one held value per sampling instant")

    def u(t):
        idx = np.clip(np.searchsorted(st, np.asarray(t, dtype=float), side="right") - 1, 0, len(st) - 1)
        return hd[idx]

    return u


def approach_control(z0, cfg=SPHERE_TUBE):
    """Radial approach from outside the kept shell.

    Returns (w_bar, t_hat, segment): the unit drift toward the nearest
    sphere point, the kept-shell hitting time (|z0| - 19/16 from outside,
    13/16 - |z0| from inside), and segment(t) = z0 + t*w_bar on [0, t_hat].
    """
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (3,):
        raise ParameterError("start state must be a single 3-d point")
    r = float(norm3(z0))
    if not np.all(np.isfinite(z0)) or r <= 1e-12:
        raise DegenerateNearestPointError("nearest sphere point is undefined at the origin")
    if cfg.comega_inner <= r <= cfg.comega_outer:
        raise TubeMembershipError("start already lies in the kept shell")
    nearest = z0 / r
    diff = nearest - z0
    w_bar = diff / float(norm3(diff))
    t_hat = r - cfg.comega_outer if r > cfg.comega_outer else cfg.comega_inner - r

    def segment(t):
        return z0 + np.asarray(t, dtype=float)[..., None] * w_bar

    return w_bar, t_hat, segment


def _reference_path(entry, u_inner, v, duration, step, breakpoints):
    """Integrate the tube field from the entry point with per-segment frozen controls.

    breakpoints split [0, duration] where u_inner or v jump; both are
    evaluated at each segment's left endpoint and held across the segment,
    matching the sample-and-hold convention.
    """
    bps = sorted({float(b) for b in breakpoints if 0.0 < float(b) < duration})
    seg_bounds = [0.0] + bps + [duration]
    x = np.asarray(entry, dtype=float)
    times = [0.0]
    states = [x]
    derivs = []
    node_interval = [0]
    sample_times, sample_states, held = [], [], []
    boundary_left = {}
    for i in range(len(seg_bounds) - 1):
        a, b = seg_bounds[i], seg_bounds[i + 1]
        u_seg = np.asarray(u_inner(a), dtype=float)
        v_seg = float(np.asarray(v(a)))
        rhs = lambda t, y, u_seg=u_seg, v_seg=v_seg: f1(y, u_seg, v_seg)
        sample_times.append(a)
        sample_states.append(x)
        held.append(np.append(u_seg, v_seg))
        nsub, h = _substeps(b - a, step)
        for j in range(nsub):
            x, k1 = _rk4_step(rhs, a + j * h, x, h)
            derivs.append(k1)
            times.append(a + (j + 1) * h)
            states.append(x)
            node_interval.append(i)
        boundary_left[len(times) - 1] = rhs(b, x)
    derivs.append(boundary_left[len(times) - 1])
    derivs = np.array(derivs)
    derivs_left = derivs.copy()
    for k, d in boundary_left.items():
        derivs_left[k] = d
    return PiTrajectory(
        times=np.array(times),
        states=np.array(states),
        derivs=derivs,
        derivs_left=derivs_left,
        node_interval=np.array(node_interval),
        sample_times=np.array(sample_times),
        sample_states=np.array(sample_states),
        held=np.array(held),
        observed=np.array(sample_states),
        t_max=math.inf,
        escaped=False,
        step=step,
    )


@dataclass
class ControlSchedule:
    """Open-loop controls (u, v, w as callables of time) for the ambient field.

    Timeline: pure drift w_bar on [0, t_hat) while u and v are zero, then
    from t_hat the inner control and the contraction gain run on the shifted
    clock with w tracking the tube field along the stored reference path.
    """

    u: Callable
    v: Callable
    w: Callable
    t_hat: float
    t2: float
    w_bar: np.ndarray
    entry: np.ndarray
    bounds: ProofBounds
    horizon: float
    reference: Optional[PiTrajectory] = None

    def rows(self, ts):
        """Schedule table rows (t, u1, u2, v, w1, w2, w3)."""
        out = []
        for t in np.asarray(ts, dtype=float):
            uu = np.asarray(self.u(t), dtype=float)
            ww = np.asarray(self.w(t), dtype=float)
            out.append([float(t), float(uu[0]), float(uu[1]), float(np.asarray(self.v(t))), float(ww[0]), float(ww[1]), float(ww[2])])
        return out

    def to_csv(self, path, ts):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "u1", "u2", "v", "w1", "w2", "w3"])
            for row in self.rows(ts):
                writer.writerow([repr(c) for c in row])


def build_extension_controls(z0, u_inner, bounds, horizon=30.0, step=1e-3, breakpoints=None, cfg=SPHERE_TUBE):
    """Assemble the full extension schedule for a start anywhere off the origin.

    u_inner is the inner sphere control as a callable of the shifted time
    (piecewise constant between breakpoints); bounds come from
    compute_bounds on the matching reference run.
    """
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (3,):
        raise ParameterError("start state must be a single 3-d point")
    r = float(norm3(z0))
    if not np.all(np.isfinite(z0)) or r <= 1e-12:
        raise DegenerateNearestPointError("nearest sphere point is undefined at the origin")
    if cfg.comega_inner <= r <= cfg.comega_outer:
        t_hat = 0.0
        w_bar = np.zeros(3)
        entry = z0
    else:
        w_bar, t_hat, _ = approach_control(z0, cfg)
        entry = z0 + t_hat * w_bar
    if t_hat >= horizon:
        raise ParameterError("horizon ends before the kept shell is reached")

    t2, v_inner = v_schedule(entry, bounds, cfg)
    duration = horizon - t_hat
    bps = list(breakpoints) if breakpoints is not None else []
    bps.append(t2)
    reference = _reference_path(entry, u_inner, v_inner, duration, step, bps)
    w_inner = w_schedule(reference, u_inner, v_inner)
    zero_u = np.zeros(2)

    def u(t):
        return zero_u if t < t_hat else np.asarray(u_inner(t - t_hat), dtype=float)

    def v(t):
        return 0.0 if t < t_hat else float(np.asarray(v_inner(t - t_hat)))

    def w(t):
        return w_bar if t < t_hat else w_inner(t - t_hat)

    return ControlSchedule(
        u=u,
        v=v,
        w=w,
        t_hat=t_hat,
        t2=t2,
        w_bar=w_bar,
        entry=entry,
        bounds=bounds,
        horizon=float(horizon),
        reference=reference,
    )
