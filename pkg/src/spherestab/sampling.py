"""Partitions and the sample-and-hold solution engine.

A closed-loop trajectory is built by recursively solving
xdot = f(x, k(x(t_i))) on each sampling interval [t_i, t_{i+1}) with the
feedback value frozen at the interval's left endpoint.  Integration is
classical fixed-step RK4 on substeps that subdivide each interval exactly.
Finite escape is detected by a norm threshold and refined by bisection, and
the resulting maximal time is reported on the trajectory.

The noisy variant perturbs the sampled state on-manifold before the
feedback is evaluated and adds a bounded actuator error through the control
channels; with both channels off it reduces bit-for-bit to the plain
integrator.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ParameterError
from .geometry import geodesic_distance, tangent_basis

ESCAPE_NORM = 1e6
BISECT_RESOLUTION = 1e-9


@dataclass(frozen=True)
class Partition:
    """Strictly increasing sampling times starting at 0, generated lazily.

    dbar and dlow are the declared upper/lower step diameters; the uniform
    kind has dbar = dlow = delta, the jittered kind draws steps uniformly
    from [delta*(1 - jitter_ratio), delta] with a deterministic seed.
    """

    kind: str
    delta: float
    jitter_ratio: float = 0.0
    seed: int = 0

    @property
    def dbar(self):
        return self.delta

    @property
    def dlow(self):
        return self.delta * (1.0 - self.jitter_ratio)

    def times(self):
        """Fresh infinite generator of sampling instants."""
        if self.kind == "uniform":
            def gen():
                i = 0
                while True:
                    yield i * self.delta
                    i += 1
        else:
            def gen():
                rng = np.random.Generator(np.random.Philox(key=self.seed))
                t = 0.0
                while True:
                    yield t
                    t += self.delta * (1.0 - self.jitter_ratio * rng.random())
        return gen()

    def instants(self, horizon):
        """Sampling instants covering [0, horizon]: all t_i < horizon plus the next one."""
        out = []
        for t in self.times():
            out.append(t)
            if t >= horizon:
                break
        return np.array(out)


def make_partition(kind, delta, jitter_ratio=0.0, seed=0):
    """Build a uniform or jittered partition with the given nominal step."""
    if kind not in ("uniform", "jittered"):
        raise ParameterError(f"unknown partition kind {kind!r}")
    if not delta > 0:
        raise ParameterError("partition delta must be positive")
    if not 0.0 <= jitter_ratio < 1.0:
        raise ParameterError("jitter_ratio must lie in [0, 1)")
    return Partition(kind=kind, delta=float(delta), jitter_ratio=float(jitter_ratio), seed=int(seed))


@dataclass
class NoiseModel:
    """Observation and actuator disturbance channels for noisy runs.

    obs_radius is the bound e(t) on the on-manifold observation offset
    (a constant or a callable of t); the sampler places the observed state
    uniformly on the geodesic cap boundary of that radius.  act_bound N
    adds a control-channel error drawn uniformly on the circle of radius N
    once per sampling interval; an explicit act callable t -> (2,) overrides
    the sampler.  All draws come from a counter-based stream keyed by
    (seed, run_index), so results do not depend on scheduling.
    """

    obs_radius: float | Callable = 0.0
    obs_cap: Optional[float] = None
    act_bound: float = 0.0
    act: Optional[Callable] = None
    seed: int = 0

    def stream(self, run_index=0):
        return np.random.Generator(np.random.Philox(key=[int(self.seed), int(run_index)]))

    def radius_at(self, t):
        e = self.obs_radius(t) if callable(self.obs_radius) else self.obs_radius
        e = float(e)
        if e < 0:
            raise ParameterError("observation radius must be nonnegative")
        if self.obs_cap is not None and e > self.obs_cap + 1e-15:
            raise ParameterError("observation radius exceeds its declared cap")
        return e


@dataclass
class PiTrajectory:
    """Sample-and-hold trajectory with dense output and escape semantics.

    states[k] is the state at times[k]; derivs[k] / derivs_left[k] are the
    right/left derivatives there (they differ only at sampling instants
    where the held control changes).  held[i] is the feedback value frozen
    on the i-th interval, evaluated at the (possibly perturbed) sample
    observed[i].  t_max is +inf unless finite escape was detected.
    """

    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    derivs_left: np.ndarray
    node_interval: np.ndarray
    sample_times: np.ndarray
    sample_states: np.ndarray
    held: np.ndarray
    observed: np.ndarray
    t_max: float
    escaped: bool
    partition: Optional[Partition] = None
    step: float = 0.0
    extra: dict = field(default_factory=dict)

    def samples(self):
        """Sequence of (t_i, state at t_i, held control on [t_i, t_{i+1}))."""
        return list(zip(self.sample_times, self.sample_states, self.held))

    @property
    def end_time(self):
        return float(self.times[-1])

    def __call__(self, t):
        """Cubic-Hermite dense output on [0, end_time]."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.times[0] - 1e-12) or np.any(t > self.times[-1] + 1e-12):
            raise ParameterError("dense output queried outside the computed span")
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2)
        t0 = self.times[idx]
        h = self.times[idx + 1] - t0
        s = np.clip((t - t0) / h, 0.0, 1.0)[..., None]
        x0 = self.states[idx]
        x1 = self.states[idx + 1]
        d0 = self.derivs[idx]
        d1 = self.derivs_left[idx + 1]
        h = h[..., None]
        s2, s3 = s * s, s * s * s
        return (
            (2 * s3 - 3 * s2 + 1) * x0
            + (s3 - 2 * s2 + s) * h * d0
            + (-2 * s3 + 3 * s2) * x1
            + (s3 - s2) * h * d1
        )


def _escaped(x):
    return (not np.all(np.isfinite(x))) or float(np.linalg.norm(x)) > ESCAPE_NORM


def _rk4_step(rhs, t, x, h):
    k1 = rhs(t, x)
    k2 = rhs(t + 0.5 * h, x + (0.5 * h) * k1)
    k3 = rhs(t + 0.5 * h, x + (0.5 * h) * k2)
    k4 = rhs(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), k1


def _bisect_escape(rhs, t0, x0, h):
    """Largest substep from (t0, x0) that stays finite, to 1e-9 resolution."""
    lo, hi = 0.0, h
    while hi - lo > BISECT_RESOLUTION:
        mid = 0.5 * (lo + hi)
        xm, _ = _rk4_step(rhs, t0, x0, mid)
        if _escaped(xm):
            hi = mid
        else:
            lo = mid
    return t0 + lo


def _substeps(length, step):
    n = max(1, int(math.ceil(length / step - 1e-12)))
    return n, length / n


def _integrate(make_rhs, observe, pi, x0, horizon, step):
    """Shared sample-and-hold loop.

    make_rhs(i, u_fb, t_i) returns the held-interval RHS (t, x) -> velocity;
    observe(i, t_i, x) returns (observed state, feedback value).
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if not np.all(np.isfinite(x0)):
        raise ParameterError("initial state must be finite")
    if not horizon > 0:
        raise ParameterError("horizon must be positive")
    if not step > 0:
        raise ParameterError("step must be positive")
    if step > pi.dlow * (1.0 + 1e-12):
        raise ParameterError("step must not exceed the partition's lower diameter")

    times = [0.0]
    states = [x0]
    derivs = []
    node_interval = [0]
    sample_times, sample_states, held, observed = [], [], [], []
    boundary_left = {}
    t_max = math.inf
    escaped = False

    gen = pi.times()
    t_i = next(gen)
    x = x0
    interval = 0
    while t_i < horizon and not escaped:
        t_next = next(gen)
        eta, u_fb = observe(interval, t_i, x)
        rhs = make_rhs(interval, u_fb, t_i)
        sample_times.append(t_i)
        sample_states.append(x)
        held.append(np.atleast_1d(np.asarray(u_fb, dtype=float)))
        observed.append(eta)
        end = min(t_next, horizon)
        nsub, h = _substeps(end - t_i, step)
        for j in range(nsub):
            t_node = t_i + j * h
            x_new, k1 = _rk4_step(rhs, t_node, x, h)
            derivs.append(k1)
            if _escaped(x_new):
                t_max = _bisect_escape(rhs, t_node, x, h)
                escaped = True
                break
            x = x_new
            times.append(t_i + (j + 1) * h)
            states.append(x)
            node_interval.append(interval)
        if not escaped:
            # left derivative at the interval-final node, under the old control
            boundary_left[len(times) - 1] = rhs(end, x)
        t_i = t_next
        interval += 1

    states = np.array(states)
    if escaped:
        derivs = derivs[: len(states)]
        derivs.extend([derivs[-1]] * (len(states) - len(derivs)))
    else:
        derivs.append(boundary_left[len(times) - 1])
    derivs = np.array(derivs)
    derivs_left = derivs.copy()
    for k, d in boundary_left.items():
        derivs_left[k] = d

    return PiTrajectory(
        times=np.array(times),
        states=states,
        derivs=derivs,
        derivs_left=derivs_left,
        node_interval=np.array(node_interval),
        sample_times=np.array(sample_times),
        sample_states=np.array(sample_states),
        held=np.array(held),
        observed=np.array(observed),
        t_max=t_max,
        escaped=escaped,
        partition=pi,
        step=step,
    )


def integrate_pi_trajectory(rhs, feedback, pi, x0, horizon, step):
    """Sample-and-hold closed loop: hold feedback(x(t_i)) on [t_i, t_{i+1}).

    rhs(x, u) is the control system; feedback maps a state to a control.
    Returns a PiTrajectory whose t_max is +inf unless the state escaped
    (norm above 1e6 or non-finite), in which case t_max is the escape time
    refined by bisection.
    """

    def observe(i, t_i, x):
        return x, feedback(x)

    def make_rhs(i, u_fb, t_i):
        return lambda t, x: rhs(x, u_fb)

    return _integrate(make_rhs, observe, pi, x0, horizon, step)


def integrate_pi_solution_noisy(rhs_affine, feedback, pi, x0, noise, horizon, step, run_index=0):
    """Noisy sample-and-hold loop: feedback sees a perturbed sample.

    rhs_affine(x, u_fb, u_act) must route the actuator error through the
    control channels.  At each sampling instant the observed state is drawn
    uniformly on the geodesic cap boundary of radius e(t_i) about the true
    state; the actuator error is constant on each interval with norm
    act_bound (or an explicit act(t) signal).  With e = 0 and no actuator
    error this reduces bitwise to integrate_pi_trajectory.
    """
    if noise is None:
        noise = NoiseModel()
    rng = noise.stream(run_index)
    zero_act = np.zeros(2)

    def observe(i, t_i, x):
        e = noise.radius_at(t_i)
        if e > 0.0:
            chi = rng.uniform(0.0, 2.0 * math.pi)
            t1, t2 = tangent_basis(x)
            eta = math.cos(e) * x + math.sin(e) * (math.cos(chi) * t1 + math.sin(chi) * t2)
        else:
            eta = x
        return eta, feedback(eta)

    def make_rhs(i, u_fb, t_i):
        if noise.act is not None:
            return lambda t, x: rhs_affine(x, u_fb, np.asarray(noise.act(t), dtype=float))
        if noise.act_bound > 0.0:
            chi = rng.uniform(0.0, 2.0 * math.pi)
            u_act = noise.act_bound * np.array([math.cos(chi), math.sin(chi)])
            return lambda t, x: rhs_affine(x, u_fb, u_act)
        return lambda t, x: rhs_affine(x, u_fb, zero_act)

    traj = _integrate(make_rhs, observe, pi, x0, horizon, step)
    traj.extra["noise"] = noise
    traj.extra["run_index"] = run_index
    return traj


def sphere_drift(traj):
    """Worst deviation of |x(t)| from 1 over the trajectory nodes."""
    return float(np.max(np.abs(np.linalg.norm(traj.states, axis=-1) - 1.0)))


def ultimate_radius(traj, attractor, tail_fraction=0.2):
    """Sup of the geodesic attractor distance over the final tail of the run."""
    t_start = traj.times[-1] * (1.0 - tail_fraction)
    tail = traj.states[traj.times >= t_start]
    d = geodesic_distance(tail[:, None, :], np.asarray(attractor)[None, :, :])
    return float(np.max(np.min(d, axis=-1)))
