"""End-effector trajectories: the geometric pick-and-place cycle and learned
primitive motions.

The cycle is three smooth segments (rest -> pick -> place -> rest) with an
inverse-tanh lift and a trapezoidal wrist profile.  The primitive motion is a
damped spring with a forcing term fitted to a demonstrated reach; once
learned it generalizes to new start points.
"""

import math
import os

import numpy as np

from vsl import motion

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

cycle = motion.plan_cycle(
    rest=(0.30, 0.10, 0.00), pick=(0.45, -0.05, 0.00),
    place=(0.55, 0.20, 0.05),
    theta_pick=math.radians(15), theta_place=math.radians(40),
    params=motion.CycleParams(h=0.15, h0=1.9, kappa=2.0,
                              t_start=0.0, t_final=9.0))
csv_path = os.path.join(OUT, "cycle.csv")
motion.export_trajectory_csv(csv_path, cycle.samples)
apex = cycle.samples[:, 3].max()
print(f"cycle: {cycle.samples.shape[0]} samples, lift apex {apex:.3f} m, "
      f"exported to {csv_path}")

demo = motion.min_jerk(0.0, 1.0, duration=1.0, dt=0.002)
params = motion.dmp_learn([demo], n_basis=20)
with open(os.path.join(OUT, "reach_params.json"), "w") as f:
    f.write(params.to_json())
repro = motion.dmp_rollout(params, dt=0.002, duration=1.0)
rmse = float(np.sqrt(np.mean((repro.y[:len(demo.y)] - demo.y) ** 2)))
print(f"reach primitive: {params.n_basis} basis functions, "
      f"reproduction RMSE {rmse:.5f}")

print("generalization to new starts (goal stays 1.0):")
for y0 in (-0.5, 0.25, 1.5):
    roll = motion.dmp_rollout(params, y0=y0, dt=0.001, duration=3.0)
    print(f"  y0={y0:+.2f} -> final {roll.y[-1]:+.5f}")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    s = cycle.samples
    ax1.plot(s[:, 1], s[:, 3], label="x-z path")
    ax1.set_xlabel("x [m]")
    ax1.set_ylabel("z [m]")
    ax1.set_title("pick-and-place lift profile")
    for y0 in (-0.5, 0.25, 1.5):
        roll = motion.dmp_rollout(params, y0=y0, dt=0.002, duration=2.0)
        ax2.plot(roll.t, roll.y, label=f"y0={y0:+.2f}")
    ax2.axhline(1.0, ls=":", c="k")
    ax2.legend()
    ax2.set_title("learned reach from new starts")
    fig.tight_layout()
    fig.savefig(os.path.join(OUT, "motion.png"), dpi=110)
    print("plot written to demos/out/motion.png")
except ImportError:
    print("matplotlib not installed; skipped the plot")
