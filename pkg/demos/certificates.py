"""Lyapunov and construction certificates on live runs.

Prints the full verification bundle (geometry identities, directional
derivative check, interval decay, invariance drift, integrator order,
finite escape), then walks one closed-loop run through the decay report:
strict decay rate in the meridional region, the exact drift rate in the
transfer band, and forward invariance of the meridional set.
"""

import json
import os

import numpy as np

from spherestab import ScenarioConfig, check_decay, check_integral_decay, run_verify
from spherestab.harness import _json_default
from spherestab.kernels import run_closed_loop_batch, warm_up

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "out")


def main():
    os.makedirs(OUT, exist_ok=True)
    warm_up()

    code, bundle = run_verify(ScenarioConfig(scenario="verify"))
    print(f"verification bundle (exit {code}):")
    for name, c in bundle["checks"].items():
        detail = ", ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}" for k, v in c.items() if k != "ok")
        print(f"  {'PASS' if c['ok'] else 'FAIL'}  {name}: {detail}")
    with open(os.path.join(OUT, "verify.json"), "w") as fh:
        json.dump(bundle, fh, sort_keys=True, indent=2, default=_json_default)

    # one run that crosses the transfer band: starts westward, hands over
    # to the meridional control, then descends to the south pole
    x0 = np.array([[np.sin(2.2) * np.cos(0.5), np.sin(2.2) * np.sin(0.5), np.cos(2.2)]])
    batch = run_closed_loop_batch(x0, 0.01, 8.0, 1e-3, record_states=True)
    traj = batch.trajectory(0)
    rep = check_decay(traj)
    print()
    print(f"single band-crossing run (final dist {float(np.arccos(abs(traj.states[-1, 2]))):.2e}):")
    print(f"  nodes in meridional region: {rep.n_meridional}, in transfer band: {rep.n_band}")
    print(f"  worst meridional margin: {rep.worst_meridional_margin:+.2e} (>= -1e-3)")
    print(f"  worst band residual |Vdot + mu|: {rep.worst_band_residual:.2e} (<= 1e-3)")
    print(f"  meridional-set invariance violations: {rep.invariance_violations}")
    integral = check_integral_decay(traj)
    print(f"  integral decay residual: {integral.worst_slack:+.2e} (<= {integral.slack:g})")

    rep.to_csv(os.path.join(OUT, "decay_report.csv"))
    with open(os.path.join(OUT, "decay_report.json"), "w") as fh:
        fh.write(rep.to_json())
    print(f"per-node decay rows in {os.path.join(OUT, 'decay_report.csv')}")


if __name__ == "__main__":
    main()
