"""Scenario orchestration: configs, runners, reports and file emission.

Four scenario kinds share one config shape: stabilization grids, ambient
extension runs, factorial noise sweeps, and the bundled verification
suite.  All randomness is derived from (seed, run index) streams, so
results are independent of batch composition and worker scheduling, and
repeated runs with the same config produce byte-identical outputs.
"""

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

try:
    import tomllib
except ImportError:
    import tomli as tomllib

from .dynamics import f_sphere
from .errors import ConfigError
from .feedback import ProofBounds, k_sphere
from .geometry import MARKED, Q, base_fields, bump_m1, dot3, fibonacci_sphere, geodesic_direction
from .kernels import run_closed_loop_batch, run_extension_batch
from .lyapunov import (
    DEFAULT_ALPHA3_COEFF,
    V,
    attractor_distance,
    check_decay,
    check_gauss,
    check_integral_decay,
)
from .sampling import integrate_pi_trajectory, make_partition

SCENARIOS = ("stabilize", "extend", "iss_sweep", "verify")

_DEFAULT_SHELLS = ((0.05, 0.5), (1.3, 3.0))

# Median ultimate radii that differ by less than this are reported as ties
# in the sweep's monotonicity verdict.  Runs that converge all the way to a
# pole stall where the x3 update rounds to zero (measured floor ~2.4e-7,
# scaling as 1/sqrt(1+N) because stronger-than-nominal actuator draws punch
# through the stall), so orderings below this scale are double-precision
# artifacts, not dynamics.
MONOTONE_TIE_RESOLUTION = 1e-6


@dataclass(frozen=True)
class ScenarioConfig:
    """One experiment description; see from_toml for the file format."""

    scenario: str = "stabilize"
    grid_n: int = 100
    states: tuple = ()
    shells: tuple = _DEFAULT_SHELLS
    shell_count: int = 50
    partition_kind: str = "uniform"
    deltas: tuple = (0.01,)
    jitter_ratio: float = 0.0
    kappas: tuple = (0.0,)
    act_bounds: tuple = (0.0,)
    step: float = 1e-3
    horizon: float = 30.0
    seeds: tuple = (0,)
    sweep_starts: int = 25
    target_radius: float = 0.05
    decay_checks: bool = True
    out_dir: str = ""
    workers: int = 1

    def __post_init__(self):
        _validate(self)

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        if "seed" in kw:
            kw["seeds"] = (int(kw.pop("seed")),)
        if "delta" in kw:
            kw["deltas"] = (float(kw.pop("delta")),)
        return replace(self, **kw)

    def initial_states(self):
        """Resolve the configured initial-condition spec to an array."""
        if self.states:
            return np.asarray(self.states, dtype=float)
        if self.scenario == "extend":
            return shell_sample(self.shells, self.shell_count)
        return fibonacci_sphere(self.grid_n, exclude=MARKED, exclude_radius=1e-6)


def _require(cond, name, message):
    if not cond:
        raise ConfigError(f"field {name!r}: {message}")


def _validate(cfg):
    _require(cfg.scenario in SCENARIOS, "scenario", f"must be one of {SCENARIOS}")
    _require(cfg.grid_n > 0, "grid_n", "must be positive")
    _require(len(cfg.deltas) > 0, "deltas", "grid must be nonempty")
    _require(all(d > 0 for d in cfg.deltas), "deltas", "all deltas must be positive")
    _require(cfg.partition_kind in ("uniform", "jittered"), "partition_kind", "must be uniform or jittered")
    _require(0.0 <= cfg.jitter_ratio < 1.0, "jitter_ratio", "must lie in [0, 1)")
    _require(cfg.step > 0, "step", "must be positive")
    _require(
        cfg.step <= min(cfg.deltas) * (1.0 - cfg.jitter_ratio) + 1e-15,
        "step",
        "must not exceed the smallest partition step",
    )
    _require(cfg.horizon > 0, "horizon", "must be positive")
    _require(len(cfg.kappas) > 0, "kappas", "grid must be nonempty")
    _require(all(k >= 0 for k in cfg.kappas), "kappas", "must be nonnegative")
    _require(len(cfg.act_bounds) > 0, "act_bounds", "grid must be nonempty")
    _require(all(n >= 0 for n in cfg.act_bounds), "act_bounds", "must be nonnegative")
    _require(len(cfg.seeds) > 0, "seeds", "grid must be nonempty")
    _require(cfg.sweep_starts > 0, "sweep_starts", "must be positive")
    _require(cfg.target_radius > 0, "target_radius", "must be positive")
    _require(cfg.workers >= 1, "workers", "must be at least 1")
    for pair in cfg.shells:
        _require(
            len(pair) == 2 and 0 < pair[0] < pair[1],
            "shells",
            "each shell must be a (lo, hi) radius pair with 0 < lo < hi",
        )
    if cfg.states:
        arr = np.asarray(cfg.states, dtype=float)
        _require(arr.ndim == 2 and arr.shape[1] == 3, "states", "must be a list of 3-d points")
        _require(bool(np.all(np.isfinite(arr))), "states", "must be finite")


_TOML_FIELDS = {
    "kind": ("scenario", str),
    "scenario": ("scenario", str),
    "grid_n": ("grid_n", int),
    "states": ("states", None),
    "shells": ("shells", None),
    "shell_count": ("shell_count", int),
    "partition_kind": ("partition_kind", str),
    "delta": (None, None),
    "deltas": ("deltas", None),
    "jitter_ratio": ("jitter_ratio", float),
    "kappas": ("kappas", None),
    "act_bounds": ("act_bounds", None),
    "step": ("step", float),
    "horizon": ("horizon", float),
    "seed": (None, None),
    "seeds": ("seeds", None),
    "sweep_starts": ("sweep_starts", int),
    "target_radius": ("target_radius", float),
    "decay_checks": ("decay_checks", bool),
    "out_dir": ("out_dir", str),
    "workers": ("workers", int),
}


def config_from_dict(table):
    """Build a ScenarioConfig from a [scenario] table with field checks."""
    kw = {}
    for key, value in table.items():
        if key not in _TOML_FIELDS:
            raise ConfigError(f"field {key!r}: unknown configuration key")
        if key == "delta":
            kw["deltas"] = (float(value),)
            continue
        if key == "seed":
            kw["seeds"] = (int(value),)
            continue
        name, cast = _TOML_FIELDS[key]
        try:
            if cast is not None:
                value = cast(value)
            elif name == "seeds":
                value = tuple(int(v) for v in value)
            elif name in ("deltas", "kappas", "act_bounds"):
                value = tuple(float(v) for v in value)
            elif name in ("states", "shells"):
                value = tuple(tuple(float(c) for c in row) for row in value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"field {key!r}: {exc}") from exc
        kw[name] = value
    try:
        return ScenarioConfig(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def config_from_toml(path):
    """Read a ScenarioConfig from the [scenario] table of a TOML file."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    if "scenario" not in doc or not isinstance(doc["scenario"], dict):
        raise ConfigError("config file must contain a [scenario] table")
    return config_from_dict(doc["scenario"])


def shell_sample(shells, count):
    """Deterministic ambient sample: Fibonacci directions, cycled shells.

    Point j takes direction j of the Fibonacci set and a radius placed by a
    low-discrepancy golden-ratio walk inside shell j mod len(shells).
    """
    dirs = fibonacci_sphere(count)
    shells = [tuple(s) for s in shells]
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    radii = np.empty(count)
    for j in range(count):
        lo, hi = shells[j % len(shells)]
        radii[j] = lo + ((j * phi) % 1.0) * (hi - lo)
    return dirs * radii[:, None]


# ---------------------------------------------------------------------------
# reports


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


@dataclass
class RunReport:
    """Per-run rows plus aggregate rows keyed by (delta, kappa, N)."""

    scenario: str
    runs: list
    aggregates: list
    meta: dict = field(default_factory=dict)

    def runs_csv(self):
        return _rows_to_csv(self.runs)

    def aggregates_csv(self):
        return _rows_to_csv(self.aggregates)

    def to_json(self):
        payload = {
            "scenario": self.scenario,
            "meta": self.meta,
            "aggregates": self.aggregates,
            "n_runs": len(self.runs),
        }
        return json.dumps(payload, sort_keys=True, indent=2, default=_json_default) + "\n"

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        paths = {}
        for name, text in (
            ("runs.csv", self.runs_csv()),
            ("aggregate.csv", self.aggregates_csv()),
            ("summary.json", self.to_json()),
        ):
            path = os.path.join(out_dir, name)
            with open(path, "w", newline="") as fh:
                fh.write(text)
            paths[name] = path
        return paths


def _json_default(value):
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serializable: {type(value)!r}")


def _rows_to_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if not rows:
        return ""
    header = list(rows[0].keys())
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(row[k]) for k in header])
    return buf.getvalue()


TRAJECTORY_COLUMNS = ("t", "x1", "x2", "x3", "u1", "u2", "norm_minus_1", "dist_A", "V", "M1", "sample_index")


def trajectory_csv(traj, out=None):
    """Dense trajectory export with the standard column set.

    Writes to the file object or path in `out`, or returns the text.
    """
    states = traj.states
    norm_err = np.linalg.norm(states, axis=-1) - 1.0
    dist = attractor_distance(states)
    values = V(states)
    m1 = bump_m1(states)
    intervals = np.asarray(traj.node_interval, dtype=int)
    held = np.asarray(traj.held, dtype=float)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_COLUMNS)
    for k in range(len(traj.times)):
        i = intervals[k]
        writer.writerow(
            [
                repr(float(traj.times[k])),
                repr(float(states[k, 0])),
                repr(float(states[k, 1])),
                repr(float(states[k, 2])),
                repr(float(held[i, 0])),
                repr(float(held[i, 1])),
                repr(float(norm_err[k])),
                repr(float(dist[k])),
                repr(float(values[k])),
                repr(float(m1[k])),
                i,
            ]
        )
    text = buf.getvalue()
    if out is None:
        return text
    if hasattr(out, "write"):
        out.write(text)
        return None
    with open(out, "w", newline="") as fh:
        fh.write(text)
    return None


# ---------------------------------------------------------------------------
# stabilization


def _stabilize_rows_uniform(points, delta, cfg, kappa=0.0, act_bound=0.0, seed=0, run_offset=0, with_decay=None):
    """Kernel-backed closed-loop batch -> per-run row dicts."""
    with_decay = cfg.decay_checks if with_decay is None else with_decay
    obs_radius = kappa * delta
    batch = run_closed_loop_batch(
        points,
        delta,
        cfg.horizon,
        cfg.step,
        obs_radius=obs_radius,
        act_bound=act_bound,
        noise_seed=seed,
        run_indices=np.arange(len(points)),
        record_states=with_decay,
        r_target=cfg.target_radius,
    )
    rows = []
    for r in range(len(points)):
        row = {
            "run_index": run_offset + r,
            "x1": points[r, 0],
            "x2": points[r, 1],
            "x3": points[r, 2],
            "delta": delta,
            "kappa": kappa,
            "act_bound": act_bound,
            "seed": seed,
            "settle_time": float(batch.settle_time[r]),
            "ultimate_radius": float(batch.ultimate_radius[r]),
            "max_distance": float(batch.max_distance[r]),
            "sphere_drift": float(batch.drift_max[r]),
            "max_v_excess": float(batch.max_v_excess[r]),
            "bounded": bool(batch.ok[r]),
            "t_max": math.inf if batch.ok[r] else float(batch.horizon),
        }
        if with_decay:
            report = check_decay(batch.trajectory(r))
            integral = check_integral_decay(batch.trajectory(r))
            row.update(
                {
                    "decay_ok": report.ok,
                    "meridional_margin": report.worst_meridional_margin,
                    "band_residual": report.worst_band_residual,
                    "invariance_violations": report.invariance_violations,
                    "integral_decay_ok": integral.ok,
                }
            )
        rows.append(row)
    return rows, batch


def _stabilize_rows_jittered(points, delta, cfg, seed=0, run_offset=0):
    """Generic-integrator fallback for jittered partitions (no kernel)."""
    rows = []
    for r, x0 in enumerate(points):
        pi = make_partition("jittered", delta, cfg.jitter_ratio, seed=seed + run_offset + r)
        traj = integrate_pi_trajectory(f_sphere, k_sphere, pi, x0, cfg.horizon, cfg.step)
        dist = attractor_distance(traj.states)
        exceed = traj.times[dist > cfg.target_radius]
        tail = dist[traj.times >= traj.times[-1] * 0.8]
        values = V(traj.states)
        rows.append(
            {
                "run_index": run_offset + r,
                "x1": x0[0],
                "x2": x0[1],
                "x3": x0[2],
                "delta": delta,
                "kappa": 0.0,
                "act_bound": 0.0,
                "seed": seed,
                "settle_time": float(exceed[-1]) if len(exceed) else 0.0,
                "ultimate_radius": float(np.max(tail)),
                "max_distance": float(np.max(dist)),
                "sphere_drift": float(np.max(np.abs(np.linalg.norm(traj.states, axis=-1) - 1.0))),
                "max_v_excess": float(max(np.max(values - values[0]), 0.0)),
                "bounded": not traj.escaped,
                "t_max": traj.t_max,
            }
        )
    return rows


def aggregate_runs(rows, keys=("delta", "kappa", "act_bound")):
    """Recompute aggregate rows from per-run rows; pure and order-stable."""
    cells = {}
    for row in rows:
        cells.setdefault(tuple(row[k] for k in keys), []).append(row)
    out = []
    for cell_key in sorted(cells):
        cell = cells[cell_key]
        ult = np.array([r["ultimate_radius"] for r in cell])
        settle = np.array([r["settle_time"] for r in cell])
        agg = dict(zip(keys, cell_key))
        agg.update(
            {
                "n_runs": len(cell),
                "median_ultimate_radius": float(np.median(ult)),
                "max_ultimate_radius": float(np.max(ult)),
                "mean_settle_time": float(np.mean(settle)),
                "max_settle_time": float(np.max(settle)),
                "max_initial_distance": float(max(r["max_distance"] for r in cell)),
                "bounded_fraction": float(np.mean([1.0 if r["bounded"] else 0.0 for r in cell])),
            }
        )
        out.append(agg)
    return out


def run_stabilize(cfg):
    """Closed-loop grid runs for each configured delta."""
    points = cfg.initial_states()
    rows = []
    for delta in cfg.deltas:
        if cfg.partition_kind == "uniform":
            delta_rows, _ = _stabilize_rows_uniform(points, delta, cfg, run_offset=len(rows))
        else:
            delta_rows = _stabilize_rows_jittered(points, delta, cfg, seed=cfg.seeds[0], run_offset=len(rows))
        rows.extend(delta_rows)
    meta = {
        "horizon": cfg.horizon,
        "step": cfg.step,
        "target_radius": cfg.target_radius,
        "n_points": len(points),
        "partition_kind": cfg.partition_kind,
    }
    return RunReport("stabilize", rows, aggregate_runs(rows), meta)


# ---------------------------------------------------------------------------
# extension


def run_extend(cfg):
    """Ambient extension runs: schedules built per start, field integrated open loop."""
    z0s = cfg.initial_states()
    delta = cfg.deltas[0]
    bases = z0s / np.linalg.norm(z0s, axis=-1, keepdims=True)
    inner = run_closed_loop_batch(bases, delta, cfg.horizon, cfg.step, r_target=cfg.target_radius)
    smax = float(np.max(inner.max_s2))
    speed = math.sqrt(smax)
    bounds = ProofBounds(
        p1=1.0,
        p2=1.0,
        p3=1.0 + speed,
        p4=0.25,
        p5=max(1.0, speed + 3.0 * (1.0 + speed)),
        eps=0.125,
    )
    batch = run_extension_batch(
        z0s, inner.held, bounds, delta, cfg.horizon, cfg.step, r_target=cfg.target_radius
    )
    rows = []
    for r in range(len(z0s)):
        arrival = float(batch.arrival_time[r])
        rows.append(
            {
                "run_index": r,
                "z1": z0s[r, 0],
                "z2": z0s[r, 1],
                "z3": z0s[r, 2],
                "delta": delta,
                "kappa": 0.0,
                "act_bound": 0.0,
                "seed": cfg.seeds[0],
                "t_hat": float(batch.t_hats[r]),
                "entry_time": float(batch.entry_measured[r]),
                "entry_error": abs(float(batch.entry_measured[r]) - float(batch.t_hats[r])),
                "t2": float(batch.t2s[r]),
                "normal_increase_violations": int(batch.normal_increase_count[r]),
                "normal_radius_at_switch": float(batch.normal_radius_at_switch[r]),
                "normal_radius_max": float(batch.normal_radius_max[r]),
                "within_quarter_tube": bool(batch.normal_radius_max[r] < 0.25),
                "arrival_time": arrival,
                "reached_target_tube": bool(math.isfinite(arrival) and arrival <= cfg.horizon),
                "bounded": bool(batch.ok[r]),
            }
        )
    agg = {
        "delta": delta,
        "kappa": 0.0,
        "act_bound": 0.0,
        "n_runs": len(rows),
        "max_entry_error": max(r["entry_error"] for r in rows),
        "total_normal_increase_violations": sum(r["normal_increase_violations"] for r in rows),
        "max_normal_radius": max(r["normal_radius_max"] for r in rows),
        "reached_fraction": float(np.mean([1.0 if r["reached_target_tube"] else 0.0 for r in rows])),
        "bounded_fraction": float(np.mean([1.0 if r["bounded"] else 0.0 for r in rows])),
    }
    meta = {
        "horizon": cfg.horizon,
        "step": cfg.step,
        "p3": bounds.p3,
        "v_rate": bounds.v_rate,
        "n_points": len(z0s),
    }
    return RunReport("extend", rows, [agg], meta)


# ---------------------------------------------------------------------------
# ISS sweep


def _sweep_cell(args):
    (points, delta, kappa, act_bound, seeds, cfg_dict) = args
    cfg = ScenarioConfig(**cfg_dict)
    rows = []
    for seed in seeds:
        seed_rows, _ = _stabilize_rows_uniform(
            points,
            delta,
            cfg,
            kappa=kappa,
            act_bound=act_bound,
            seed=seed,
            run_offset=0,
            with_decay=False,
        )
        rows.extend(seed_rows)
    return rows


def run_iss_sweep(cfg):
    """Full factorial (delta, kappa, N) x starts x seeds with per-cell stats.

    Observation noise in a cell is capped at kappa times the partition's
    lower step diameter (here kappa * delta).  The (0, 0) cells perform no
    draws, so they reproduce plain stabilization runs bit for bit.

    Monotonicity of the median ultimate radius in the actuator bound is a
    statistical verdict: raw medians are reported as-is, the nondecreasing
    flag treats differences below MONOTONE_TIE_RESOLUTION as ties (both
    noise channels enter through fields that vanish on the attractor, so
    fully converged cells differ only by the sub-micro rounding floor).
    """
    points = cfg.initial_states()[: cfg.sweep_starts]
    cfg_dict = {
        "scenario": cfg.scenario,
        "horizon": cfg.horizon,
        "step": cfg.step,
        "target_radius": cfg.target_radius,
        "decay_checks": False,
    }
    tasks = []
    for delta in cfg.deltas:
        for kappa in cfg.kappas:
            for act_bound in cfg.act_bounds:
                tasks.append((points, delta, kappa, act_bound, tuple(cfg.seeds), cfg_dict))
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            cell_rows = list(pool.map(_sweep_cell, tasks))
    else:
        cell_rows = [_sweep_cell(t) for t in tasks]
    rows = [row for chunk in cell_rows for row in chunk]
    aggregates = aggregate_runs(rows)

    # monotonicity of the median ultimate radius in the actuator bound,
    # reported per (delta, kappa)
    monotone = {}
    for agg in aggregates:
        monotone.setdefault((agg["delta"], agg["kappa"]), []).append(
            (agg["act_bound"], agg["median_ultimate_radius"])
        )
    summaries = []
    for (delta, kappa), pairs in sorted(monotone.items()):
        pairs.sort()
        medians = [m for _, m in pairs]
        summaries.append(
            {
                "delta": delta,
                "kappa": kappa,
                "act_bounds": [n for n, _ in pairs],
                "medians": medians,
                "tie_resolution": MONOTONE_TIE_RESOLUTION,
                "nondecreasing": bool(np.all(np.diff(medians) >= -MONOTONE_TIE_RESOLUTION)),
            }
        )
    meta = {
        "horizon": cfg.horizon,
        "step": cfg.step,
        "n_starts": len(points),
        "seeds": list(cfg.seeds),
        "monotonicity": summaries,
        "expected_rows": len(cfg.deltas) * len(cfg.kappas) * len(cfg.act_bounds) * len(points) * len(cfg.seeds),
    }
    return RunReport("iss_sweep", rows, aggregates, meta)


# ---------------------------------------------------------------------------
# verification bundle


def richardson_ratio(steps=(4e-3, 2e-3, 1e-3), delta=0.04, horizon=1.0):
    """Endpoint Richardson ratio |x_4h - x_2h| / |x_2h - x_h| on a smooth arc."""
    x0 = np.array([math.sin(1.0) * math.cos(-math.pi / 2.0), math.sin(1.0) * math.sin(-math.pi / 2.0), math.cos(1.0)])
    pi = make_partition("uniform", delta)
    finals = []
    for step in steps:
        traj = integrate_pi_trajectory(f_sphere, k_sphere, pi, x0, horizon, step)
        finals.append(traj.states[-1])
    num = float(np.linalg.norm(finals[0] - finals[1]))
    den = float(np.linalg.norm(finals[1] - finals[2]))
    return num / den


def escape_time_error():
    """Deviation of the detected blow-up time of xdot = 1 + x^2 from pi/2."""
    pi = make_partition("uniform", 0.1)
    traj = integrate_pi_trajectory(
        lambda x, u: 1.0 + x * x, lambda x: 0.0, pi, np.array([0.0]), 10.0, 1e-4
    )
    if not traj.escaped:
        return math.inf
    return abs(traj.t_max - math.pi / 2.0)


def calibrate_alpha3(trajectories, safety=0.9):
    """Largest coefficient c with V(t) - V(0) <= -c * integral of dist_A^2.

    Returns the per-batch infimum scaled by the safety factor; the default
    certificate coefficient must stay below this value.
    """
    best = math.inf
    for traj in trajectories:
        values = V(traj.states)
        rate = attractor_distance(traj.states) ** 2
        steps = np.diff(traj.times)
        integral = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * steps)])
        drop = values[0] - values
        positive = integral > 1e-12
        if np.any(positive):
            best = min(best, float(np.min(drop[positive] / integral[positive])))
    return best * safety


def run_verify(cfg, direction_field=None):
    """Bundled verification suite; returns (exit_code, verdict dict)."""
    direction = geodesic_direction if direction_field is None else direction_field
    checks = {}

    pts = fibonacci_sphere(10000, exclude=np.array([Q, -Q]), exclude_radius=1e-6)
    b1, b2 = base_fields(pts)
    y = direction(pts, Q)
    sin_polar = np.sqrt(np.clip(1.0 - pts[:, 2] ** 2, 0.0, None))
    err1 = float(np.max(np.abs(dot3(b1, y) - sin_polar)))
    err2 = float(np.max(np.abs(dot3(b2, y))))
    checks["geometry_identities"] = {
        "ok": err1 <= 1e-12 and err2 <= 1e-12,
        "meridional_error": err1,
        "westward_error": err2,
    }

    pi = make_partition("uniform", 0.01)
    circle = integrate_pi_trajectory(
        f_sphere, lambda x: np.array([0.0, 1.0]), pi, np.array([1.0, 0.0, 0.0]), 1.2, 1e-3
    )
    unit = check_gauss(circle, np.array([0.0, -1.0, 0.0]), direction_field=direction)
    checks["gauss_unit_speed"] = {
        "ok": abs(unit.max_rel_error) <= 1e-6,
        "max_rel_error": unit.max_rel_error,
    }

    points = cfg.initial_states()[:10]
    batch = run_closed_loop_batch(points, cfg.deltas[0], min(cfg.horizon, 12.0), cfg.step, record_states=True, r_target=cfg.target_radius)
    gauss_worst = 0.0
    decay_ok = True
    decay_margin = math.inf
    band_residual = 0.0
    invariance_violations = 0
    trajs = [batch.trajectory(r) for r in range(len(points))]
    for traj in trajs:
        gauss_worst = max(gauss_worst, check_gauss(traj, Q, direction_field=direction).max_rel_error)
        report = check_decay(traj)
        decay_ok = decay_ok and report.ok
        decay_margin = min(decay_margin, report.worst_meridional_margin)
        band_residual = max(band_residual, report.worst_band_residual)
        invariance_violations += report.invariance_violations
    checks["gauss_closed_loop"] = {"ok": gauss_worst <= 1e-4, "max_rel_error": gauss_worst}
    checks["decay"] = {
        "ok": decay_ok,
        "worst_meridional_margin": decay_margin,
        "worst_band_residual": band_residual,
        "invariance_violations": invariance_violations,
    }

    alpha_cap = calibrate_alpha3(trajs)
    checks["integral_decay"] = {
        "ok": DEFAULT_ALPHA3_COEFF <= alpha_cap
        and all(check_integral_decay(t).ok for t in trajs),
        "coefficient": DEFAULT_ALPHA3_COEFF,
        "calibrated_cap": alpha_cap,
    }

    drift = float(np.max(batch.drift_max))
    checks["invariance_drift"] = {"ok": drift <= 1e-6, "max_drift": drift}

    ratio = richardson_ratio()
    checks["integrator_order"] = {"ok": 12.0 <= ratio <= 20.0, "richardson_ratio": ratio}

    esc = escape_time_error()
    checks["finite_escape"] = {"ok": esc <= 1e-3, "time_error": esc}

    all_ok = all(c["ok"] for c in checks.values())
    bundle = {
        "ok": all_ok,
        "checks": checks,
        "failed": sorted(name for name, c in checks.items() if not c["ok"]),
    }
    return (0 if all_ok else 1), bundle


def run_scenario(cfg):
    """Dispatch a config to its runner."""
    if cfg.scenario == "stabilize":
        return run_stabilize(cfg)
    if cfg.scenario == "extend":
        return run_extend(cfg)
    if cfg.scenario == "iss_sweep":
        return run_iss_sweep(cfg)
    raise ConfigError("field 'scenario': verify has no RunReport; use run_verify")
