"""Nonsmooth Lyapunov pair for the sphere loop and its numerical certificates.

V_q is the geodesic distance to the nearer pole, V_r the larger geodesic
distance to the two marked equator points, and V = V_q * (1 + V_r) the
composite function whose sampled decay the checks certify.  The checks
differentiate recorded trajectories numerically and report margins against
the two decay inequalities, excluding one sampling interval around each
held-control switch and a small ball around the attractor where the
finite differences lose conditioning.
"""

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError
from .geometry import bump_m1, geodesic_direction, dot3

ATTRACTOR_EXCLUSION = 1e-3
DECAY_TOL = 1e-3
DEFAULT_ALPHA3_COEFF = 0.05


def V_q(x):
    """Geodesic distance to the nearer pole, arccos|x3|; broadcasts."""
    x = np.asarray(x, dtype=float)
    return np.arccos(np.clip(np.abs(x[..., 2]), -1.0, 1.0))


def attractor_distance(x):
    """Distance to the two-pole attractor (alias of V_q)."""
    return V_q(x)


def V_r(x):
    """Larger geodesic distance to the two marked equator points, arccos(-|x2|)."""
    x = np.asarray(x, dtype=float)
    return np.arccos(np.clip(-np.abs(x[..., 1]), -1.0, 1.0))


def V(x):
    """Composite pair function V_q * (1 + V_r)."""
    return V_q(x) * (1.0 + V_r(x))


def mu(x):
    """Westward decay rate x1 * V_q / sqrt(x1^2 + x3^2).

    Undefined on the marked equator axis x1 = x3 = 0, where DomainError is
    raised.
    """
    x = np.asarray(x, dtype=float)
    s = x[..., 0] * x[..., 0] + x[..., 2] * x[..., 2]
    if np.any(s <= 0.0):
        raise DomainError("westward rate undefined where x1 = x3 = 0")
    return x[..., 0] * V_q(x) / np.sqrt(s)


def default_alpha3(d):
    """Comparison-function floor used by the integral decay certificate."""
    d = np.asarray(d, dtype=float)
    return DEFAULT_ALPHA3_COEFF * d * d


def _switch_times(traj):
    if len(traj.held) < 2:
        return np.empty(0)
    changed = np.any(traj.held[1:] != traj.held[:-1], axis=-1)
    return np.asarray(traj.sample_times[1:])[changed]


def _switch_window(traj):
    if traj.partition is not None:
        dbar = traj.partition.dbar
    elif len(traj.sample_times) > 1:
        dbar = float(np.max(np.diff(traj.sample_times)))
    else:
        dbar = 0.0
    return dbar + traj.step


@dataclass
class GaussReport:
    """Result of the distance-derivative identity check along a run."""

    max_rel_error: float
    n_checked: int
    n_excluded_margin: int
    n_excluded_switch: int

    @property
    def flagged(self):
        return self.n_excluded_margin > 0


def check_gauss(traj, p, h=1e-5, margin=1e-3, rel_floor=1e-3, direction_field=geodesic_direction):
    """Check d/dt G(x(t), p) = -<xdot, Y^p(x)> along a recorded run.

    The left side is a central difference of the dense output at resolution
    h; the right side uses the node derivative and the unit direction field
    toward p.  Nodes within margin of +-p and nodes within one sampling
    interval of a held-control switch are excluded.  Relative errors are
    floored at rel_floor to keep near-zero rates meaningful.
    """
    p = np.asarray(p, dtype=float)
    times = traj.times
    lo, hi = times[0] + h, times[-1] - h
    mask = (times >= lo) & (times <= hi)

    window = max(_switch_window(traj), h)
    n_excluded_switch = 0
    for ts in _switch_times(traj):
        hit = mask & (np.abs(times - ts) < window)
        n_excluded_switch += int(np.count_nonzero(hit))
        mask &= ~hit

    states = traj.states
    cos_to_p = np.abs(dot3(states, p))
    near = mask & (np.arccos(np.clip(cos_to_p, -1.0, 1.0)) <= margin)
    n_excluded_margin = int(np.count_nonzero(near))
    mask &= ~near

    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        return GaussReport(0.0, 0, n_excluded_margin, n_excluded_switch)

    t_sel = times[idx]
    g_plus = np.arccos(np.clip(dot3(traj(t_sel + h), p), -1.0, 1.0))
    g_minus = np.arccos(np.clip(dot3(traj(t_sel - h), p), -1.0, 1.0))
    fd = (g_plus - g_minus) / (2.0 * h)
    analytic = -dot3(traj.derivs[idx], direction_field(states[idx], p))
    rel = np.abs(fd - analytic) / np.maximum(np.abs(analytic), rel_floor)
    return GaussReport(float(np.max(rel)), len(idx), n_excluded_margin, n_excluded_switch)


@dataclass
class DecayReport:
    """Sampled decay certificates for the two feedback branches.

    Node k carries region[k]: 1 when the meridional inequality
    dV/dt <= -sqrt(1 - x3^2) was checked, 2 when the westward identity
    |dV/dt + mu| <= tol was checked, 0 when the node was excluded (switch
    window, attractor ball, trajectory endpoints, or a branch-degenerate
    coordinate).
    """

    times: np.ndarray
    values: np.ndarray
    rates: np.ndarray
    region: np.ndarray
    margins: np.ndarray
    tol: float
    meridional_ok: bool
    band_ok: bool
    invariance_ok: bool
    worst_meridional_margin: float
    worst_band_residual: float
    invariance_violations: int
    n_excluded_switch: int
    n_excluded_attractor: int

    @property
    def ok(self):
        return self.meridional_ok and self.band_ok and self.invariance_ok

    @property
    def n_meridional(self):
        return int(np.count_nonzero(self.region == 1))

    @property
    def n_band(self):
        return int(np.count_nonzero(self.region == 2))

    def to_json(self):
        return json.dumps(
            {
                "ok": self.ok,
                "meridional_ok": self.meridional_ok,
                "band_ok": self.band_ok,
                "invariance_ok": self.invariance_ok,
                "worst_meridional_margin": self.worst_meridional_margin,
                "worst_band_residual": self.worst_band_residual,
                "invariance_violations": self.invariance_violations,
                "n_meridional": self.n_meridional,
                "n_band": self.n_band,
                "n_excluded_switch": self.n_excluded_switch,
                "n_excluded_attractor": self.n_excluded_attractor,
                "tol": self.tol,
            },
            sort_keys=True,
        )

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "V", "dVdt", "region", "margin"])
            for k in range(len(self.times)):
                writer.writerow(
                    [
                        repr(float(self.times[k])),
                        repr(float(self.values[k])),
                        repr(float(self.rates[k])),
                        int(self.region[k]),
                        repr(float(self.margins[k])),
                    ]
                )


def check_decay(traj, tol=DECAY_TOL, attractor_exclusion=ATTRACTOR_EXCLUSION):
    """Certify the sampled decay of V along a closed-loop run.

    Wherever the bump factor is exactly 1 (meridional branch) the rate must
    satisfy dV/dt <= -sqrt(1 - x3^2) + tol; where it is below 1 (westward
    branch) the rate must match -mu within tol.  Rates are central
    differences over adjacent nodes, so nodes one step from the ends are
    skipped; so are nodes within one sampling interval of a control switch
    and nodes with V below attractor_exclusion.  The report also certifies
    forward invariance of the meridional region at the sampling instants:
    once a sample has bump factor 1 every later sample must as well.
    """
    times = traj.times
    states = traj.states
    n = len(times)
    values = V(states)
    rates = np.full(n, np.nan)
    if n >= 3:
        rates[1:-1] = (values[2:] - values[:-2]) / (times[2:] - times[:-2])
    region = np.zeros(n, dtype=np.int8)
    margins = np.full(n, np.nan)

    interior = np.zeros(n, dtype=bool)
    interior[1:-1] = True

    window = _switch_window(traj)
    switch_excluded = np.zeros(n, dtype=bool)
    for ts in _switch_times(traj):
        switch_excluded |= np.abs(times - ts) < window
    n_excluded_switch = int(np.count_nonzero(switch_excluded & interior))

    near_attractor = values < attractor_exclusion
    n_excluded_attractor = int(np.count_nonzero(near_attractor & interior))

    eligible = interior & ~switch_excluded & ~near_attractor
    m1 = bump_m1(states)
    x1, x2, x3 = states[..., 0], states[..., 1], states[..., 2]

    meridional = eligible & (m1 >= 1.0) & (x2 != 0.0) & (x3 != 0.0)
    band = eligible & (m1 < 1.0) & (x1 * x1 + x3 * x3 > 0.0)

    region[meridional] = 1
    region[band] = 2

    bound = -np.sqrt(np.clip(1.0 - x3 * x3, 0.0, None))
    margins[meridional] = bound[meridional] - rates[meridional]
    if np.any(band):
        margins[band] = np.abs(rates[band] + mu(states[band]))

    worst_meridional = float(np.min(margins[meridional])) if np.any(meridional) else math.inf
    worst_band = float(np.max(margins[band])) if np.any(band) else 0.0
    meridional_ok = worst_meridional >= -tol
    band_ok = worst_band <= tol

    sample_m1 = bump_m1(traj.sample_states)
    locked = np.flatnonzero(sample_m1 >= 1.0)
    if len(locked) == 0:
        violations = 0
    else:
        violations = int(np.count_nonzero(sample_m1[locked[0]:] < 1.0))

    return DecayReport(
        times=times,
        values=values,
        rates=rates,
        region=region,
        margins=margins,
        tol=tol,
        meridional_ok=bool(meridional_ok),
        band_ok=bool(band_ok),
        invariance_ok=violations == 0,
        worst_meridional_margin=worst_meridional,
        worst_band_residual=worst_band,
        invariance_violations=violations,
        n_excluded_switch=n_excluded_switch,
        n_excluded_attractor=n_excluded_attractor,
    )


@dataclass
class IntegralDecayReport:
    """Trapezoid check of V(t) - V(0) <= -integral of alpha3(dist_A)."""

    ok: bool
    worst_slack: float
    slack: float


def check_integral_decay(traj, alpha3=default_alpha3, slack=1e-3):
    """Integral decay certificate along a recorded run.

    Accumulates alpha3 of the attractor distance with the trapezoid rule on
    the node grid and requires V(t_k) - V(t_0) + integral <= slack at every
    node.
    """
    times = traj.times
    values = V(traj.states)
    rate = np.asarray(alpha3(attractor_distance(traj.states)), dtype=float)
    steps = np.diff(times)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * steps)])
    residual = values - values[0] + integral
    worst = float(np.max(residual))
    return IntegralDecayReport(ok=worst <= slack, worst_slack=worst, slack=slack)
