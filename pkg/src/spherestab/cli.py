"""Command line entry points: simulate, extend, sweep, verify.

simulate integrates one closed-loop run and emits its dense trajectory
CSV; extend and sweep emit per-run and aggregate report files; verify
prints the certificate bundle.  Exit codes: 0 success, 1 a run escaped
or a verification check failed, 2 bad configuration or arguments.
"""

import argparse
import json
import os
import sys

import numpy as np

from .dynamics import f_sphere
from .errors import ConfigError
from .feedback import k_sphere
from .harness import (
    ScenarioConfig,
    _json_default,
    config_from_toml,
    run_extend,
    run_iss_sweep,
    run_verify,
    trajectory_csv,
)
from .kernels import run_closed_loop_batch
from .sampling import NoiseModel, integrate_pi_solution_noisy, make_partition

_SCENARIO_FOR = {
    "simulate": "stabilize",
    "extend": "extend",
    "sweep": "iss_sweep",
    "verify": "verify",
}


def _add_common(parser):
    parser.add_argument("--config", help="TOML file with a [scenario] table")
    parser.add_argument("--seed", type=int, help="replace the seed grid with one seed")
    parser.add_argument("--out", help="output directory (default: stdout)")
    parser.add_argument("--workers", type=int, help="process count for sweep cells")
    parser.add_argument("--delta", type=float, help="replace the delta grid with one value")
    parser.add_argument("--horizon", type=float, help="simulation horizon")
    parser.add_argument("--step", type=float, help="integrator step")


def build_parser():
    parser = argparse.ArgumentParser(prog="spherestab")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "one closed-loop run; dense trajectory CSV to stdout or --out"),
        ("extend", "ambient tube runs from off-manifold starts"),
        ("sweep", "factorial noise sweep (delta x kappa x actuator bound)"),
        ("verify", "certificate suite; nonzero exit on any failed check"),
    ):
        _add_common(sub.add_parser(name, help=help_text))
    return parser


def load_config(args):
    if args.config:
        cfg = config_from_toml(args.config)
    else:
        cfg = ScenarioConfig(scenario=_SCENARIO_FOR[args.command])
    overrides = {
        "scenario": _SCENARIO_FOR[args.command],
        "seed": args.seed,
        "out_dir": args.out,
        "workers": args.workers,
        "delta": args.delta,
        "horizon": args.horizon,
        "step": args.step,
    }
    return cfg.with_overrides(**overrides)


def _simulate(cfg):
    """One closed-loop run from the first configured start."""
    x0 = cfg.initial_states()[0]
    delta = cfg.deltas[0]
    kappa = cfg.kappas[0]
    act_bound = cfg.act_bounds[0]
    if cfg.partition_kind == "uniform":
        batch = run_closed_loop_batch(
            np.array([x0]),
            delta,
            cfg.horizon,
            cfg.step,
            obs_radius=kappa * delta,
            act_bound=act_bound,
            noise_seed=cfg.seeds[0],
            record_states=True,
            r_target=cfg.target_radius,
        )
        traj = batch.trajectory(0)
    else:
        pi = make_partition("jittered", delta, cfg.jitter_ratio, seed=cfg.seeds[0])
        noise = NoiseModel(
            obs_radius=kappa * pi.dlow, act_bound=act_bound, seed=cfg.seeds[0]
        )
        traj = integrate_pi_solution_noisy(
            lambda x, u_fb, u_act: f_sphere(x, u_fb + u_act),
            k_sphere,
            pi,
            x0,
            noise,
            cfg.horizon,
            cfg.step,
        )
    return traj


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "verify":
        code, bundle = run_verify(cfg)
        text = json.dumps(bundle, sort_keys=True, indent=2, default=_json_default) + "\n"
        sys.stdout.write(text)
        if cfg.out_dir:
            os.makedirs(cfg.out_dir, exist_ok=True)
            with open(os.path.join(cfg.out_dir, "verify.json"), "w") as fh:
                fh.write(text)
        return code

    if args.command == "simulate":
        traj = _simulate(cfg)
        if cfg.out_dir:
            os.makedirs(cfg.out_dir, exist_ok=True)
            path = os.path.join(cfg.out_dir, "trajectory.csv")
            trajectory_csv(traj, path)
            print(f"wrote {path}")
        else:
            trajectory_csv(traj, sys.stdout)
        return 0 if not traj.escaped else 1

    runner = {"extend": run_extend, "sweep": run_iss_sweep}[args.command]
    report = runner(cfg)
    if cfg.out_dir:
        paths = report.write(cfg.out_dir)
        for name in sorted(paths):
            print(f"wrote {paths[name]}")
    else:
        sys.stdout.write(report.to_json())
    bounded = all(row["bounded"] for row in report.runs)
    return 0 if bounded else 1


if __name__ == "__main__":
    sys.exit(main())
