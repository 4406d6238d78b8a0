"""Closed-loop stabilization over a sphere-covering grid.

Runs the discontinuous feedback under sample-and-hold from 100 starting
points, prints the settle-time / ultimate-radius table for a few
partition diameters, and saves the dense trajectory of the slowest run
(CSV plus a distance/Lyapunov plot if matplotlib is available).
"""

import os

import numpy as np

from spherestab import ScenarioConfig, run_stabilize, trajectory_csv
from spherestab.kernels import run_closed_loop_batch, warm_up

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "out")
DELTAS = (0.2, 0.1, 0.05, 0.01)
HORIZON = 30.0
STEP = 1e-3


def main():
    os.makedirs(OUT, exist_ok=True)
    warm_up()

    cfg = ScenarioConfig(grid_n=100, deltas=DELTAS, horizon=HORIZON, step=STEP, decay_checks=False)
    report = run_stabilize(cfg)

    print(f"{len(report.runs)} runs over {len(DELTAS)} partition diameters")
    print(f"{'delta':>6} {'mean settle':>12} {'max settle':>11} {'median ult':>11} {'max ult':>10}")
    for agg in report.aggregates:
        print(
            f"{agg['delta']:>6} {agg['mean_settle_time']:>12.3f} {agg['max_settle_time']:>11.3f} "
            f"{agg['median_ultimate_radius']:>11.2e} {agg['max_ultimate_radius']:>10.2e}"
        )
    report.write(os.path.join(OUT, "stabilize"))

    # rerun the slowest delta=0.01 start with state recording for the plot
    rows = [r for r in report.runs if r["delta"] == 0.01]
    worst = max(rows, key=lambda r: r["settle_time"])
    x0 = np.array([[worst["x1"], worst["x2"], worst["x3"]]])
    batch = run_closed_loop_batch(x0, 0.01, HORIZON, STEP, record_states=True)
    traj = batch.trajectory(0)
    csv_path = os.path.join(OUT, "slowest_run.csv")
    trajectory_csv(traj, csv_path)
    print(f"slowest run settles at t = {worst['settle_time']:.2f}; trajectory in {csv_path}")

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not available, skipping plot")
        return

    from spherestab import V, attractor_distance

    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    ax1.semilogy(traj.times, np.maximum(attractor_distance(traj.states), 1e-16))
    ax1.axhline(0.05, color="gray", ls="--", lw=0.8)
    ax1.set_ylabel("dist to {q, -q}")
    ax2.plot(traj.times, V(traj.states))
    ax2.set_ylabel("V")
    ax2.set_xlabel("t")
    fig.tight_layout()
    fig.savefig(os.path.join(OUT, "slowest_run.png"), dpi=120)
    print(f"plot in {os.path.join(OUT, 'slowest_run.png')}")


if __name__ == "__main__":
    main()
