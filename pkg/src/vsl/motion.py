"""Cartesian pick-and-place trajectory cycles and learned primitive motions.

The cycle planner builds three smooth segments (rest -> pick -> place -> rest)
with cubic x/y paths, an inverse-tanh lift shape in z, and a trapezoidal wrist
rotation profile.  Primitive motions are damped-spring dynamical systems with
a learned nonlinear forcing term, trained from demonstrated trajectories.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDemo, InvalidShape, NonPositiveDuration

ALPHA_Z = 25.0
ALPHA_X = 8.0
N_BASIS = 20


# --- geometric trajectory cycle ------------------------------------------------

@dataclass(frozen=True)
class CycleParams:
    kappa: float = 2.0
    h: float = 0.15            # apex of the lift above the endpoint mean
    h0: float = 1.9            # lift shape parameter, |h0| < 2
    t_start: float = 0.0
    t_final: float = 9.0
    plateau_fraction: float = 0.5
    samples_per_segment: int = 200


@dataclass
class TrajectoryCycle:
    rest: tuple
    pick: tuple
    place: tuple
    theta_pick: float
    theta_place: float
    params: CycleParams
    samples: np.ndarray        # columns t, x, y, z, theta

    def segment_times(self):
        t0, t1 = self.params.t_start, self.params.t_final
        third = (t1 - t0) / 3.0
        return [(t0, t0 + third), (t0 + third, t0 + 2 * third), (t0 + 2 * third, t1)]


def smoothstep(u):
    return 3.0 * u ** 2 - 2.0 * u ** 3


def _cubic(p0: float, p1: float, s: np.ndarray) -> np.ndarray:
    # endpoint positions matched, zero path-parameter derivatives at both ends
    d = p1 - p0
    return p0 + d * (3.0 * s ** 2 - 2.0 * s ** 3)


def lift_shape(s: np.ndarray, h: float, h0: float, kappa: float) -> np.ndarray:
    """Normalized lift profile: 0 at both ends, exactly h at s = 0.5."""
    if abs(h0) >= 2.0:
        raise InvalidShape(f"|h0| = {abs(h0)} >= 2 leaves the atanh domain")
    if kappa < 1.0:
        raise InvalidShape("kappa must be >= 1")
    raw = 1.0 - np.abs(np.arctanh(h0 * (np.asarray(s, dtype=np.float64) - 0.5))) ** kappa
    raw0 = 1.0 - abs(math.atanh(h0 * -0.5)) ** kappa
    return h * (raw - raw0) / (1.0 - raw0)


def _segment(p0, p1, theta0, theta1, t0, t1, params: CycleParams) -> np.ndarray:
    n = params.samples_per_segment
    t = np.linspace(t0, t1, n)
    u = (t - t0) / (t1 - t0)
    s = smoothstep(u)
    x = _cubic(p0[0], p1[0], s)
    y = _cubic(p0[1], p1[1], s)
    z = lift_shape(s, params.h, params.h0, params.kappa) \
        + p0[2] * (1.0 - s) + p1[2] * s
    theta = _trapezoid_profile(theta1 - theta0, t0, t1,
                               params.plateau_fraction, t) + theta0
    return np.column_stack([t, x, y, z, theta])


def plan_cycle(rest, pick, place, theta_pick: float, theta_place: float,
               params: CycleParams | None = None) -> TrajectoryCycle:
    """Full pick-and-place cycle; endpoints are hit exactly at segment joins."""
    params = params or CycleParams()
    if params.t_final <= params.t_start:
        raise NonPositiveDuration(
            f"t_final {params.t_final} <= t_start {params.t_start}")
    if abs(params.h0) >= 2.0:
        raise InvalidShape(f"|h0| = {abs(params.h0)} >= 2")
    t0, t1 = params.t_start, params.t_final
    third = (t1 - t0) / 3.0
    seg1 = _segment(rest, pick, 0.0, theta_pick, t0, t0 + third, params)
    seg2 = _segment(pick, place, theta_pick, theta_place,
                    t0 + third, t0 + 2 * third, params)
    seg3 = _segment(place, rest, theta_place, 0.0, t0 + 2 * third, t1, params)
    samples = np.vstack([seg1, seg2[1:], seg3[1:]])
    return TrajectoryCycle(rest=tuple(rest), pick=tuple(pick), place=tuple(place),
                           theta_pick=theta_pick, theta_place=theta_place,
                           params=params, samples=samples)


def _trapezoid_profile(target: float, t_start: float, t_final: float,
                       plateau_fraction: float, t: np.ndarray) -> np.ndarray:
    """Angle profile with a trapezoidal rate: ramp up, cruise, ramp down."""
    T = t_final - t_start
    rho = plateau_fraction
    ta = (1.0 - rho) * T / 2.0
    vmax = 2.0 * target / (T * (1.0 + rho))
    tt = np.clip(t - t_start, 0.0, T)
    out = np.empty_like(tt)
    acc = vmax / ta if ta > 0 else 0.0
    rise = tt < ta
    out[rise] = 0.5 * acc * tt[rise] ** 2
    cruise = (tt >= ta) & (tt <= T - ta)
    out[cruise] = 0.5 * vmax * ta + vmax * (tt[cruise] - ta)
    fall = tt > T - ta
    out[fall] = target - 0.5 * acc * (T - tt[fall]) ** 2
    if target == 0.0:
        out[:] = 0.0
    return out


def rotation_profile(theta_target: float, t_start: float, t_final: float,
                     plateau_fraction: float = 0.5, n: int = 201
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Sampled wrist angle trajectory; theta(t_start) = 0, theta(t_final) = target."""
    if t_final <= t_start:
        raise NonPositiveDuration("t_final must exceed t_start")
    if not 0.0 < plateau_fraction < 1.0:
        raise InvalidShape("plateau_fraction must lie in (0, 1)")
    t = np.linspace(t_start, t_final, n)
    return t, _trapezoid_profile(theta_target, t_start, t_final, plateau_fraction, t)


# --- primitive motions as damped-spring systems ---------------------------------

@dataclass
class DMPParams:
    alpha_z: float
    beta_z: float
    alpha_x: float
    tau: float
    weights: np.ndarray
    centers: np.ndarray
    widths: np.ndarray
    y0: float
    g: float

    @property
    def n_basis(self) -> int:
        return len(self.weights)

    def to_dict(self) -> dict:
        return {"alpha_z": self.alpha_z, "beta_z": self.beta_z,
                "alpha_x": self.alpha_x, "tau": self.tau,
                "weights": self.weights.tolist(),
                "centers": self.centers.tolist(),
                "widths": self.widths.tolist(),
                "y0": self.y0, "g": self.g}

    @classmethod
    def from_dict(cls, d: dict) -> "DMPParams":
        return cls(alpha_z=d["alpha_z"], beta_z=d["beta_z"], alpha_x=d["alpha_x"],
                   tau=d["tau"], weights=np.asarray(d["weights"], dtype=np.float64),
                   centers=np.asarray(d["centers"], dtype=np.float64),
                   widths=np.asarray(d["widths"], dtype=np.float64),
                   y0=d["y0"], g=d["g"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


@dataclass(frozen=True)
class DemoTrajectory:
    y: np.ndarray
    yd: np.ndarray
    ydd: np.ndarray
    dt: float

    def __post_init__(self):
        if len(self.y) < 10:
            raise DegenerateDemo("demonstration needs at least 10 samples")
        if self.dt <= 0:
            raise DegenerateDemo("dt must be positive")

    @property
    def duration(self) -> float:
        return (len(self.y) - 1) * self.dt


def _basis_centers(n: int, alpha_x: float) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian centers equally spaced in phase along a log-time schedule."""
    c = np.exp(-alpha_x * np.linspace(0.0, 1.0, n))
    d = np.diff(c)
    widths = 1.0 / (2.0 * d ** 2)
    widths = np.append(widths, widths[-1])
    return c, widths


def _basis_matrix(x: np.ndarray, centers: np.ndarray, widths: np.ndarray
                  ) -> np.ndarray:
    psi = np.exp(-widths[None, :] * (x[:, None] - centers[None, :]) ** 2)
    return psi / psi.sum(axis=1, keepdims=True)


def _phase(alpha_x: float, tau: float, dt: float, steps: int) -> np.ndarray:
    """Discrete canonical phase by the same explicit update the rollout uses."""
    x = np.empty(steps)
    x[0] = 1.0
    decay = 1.0 - dt * alpha_x / tau
    for k in range(1, steps):
        x[k] = x[k - 1] * decay
    return x


def dmp_learn(demos, g: float | None = None, n_basis: int = N_BASIS,
              alpha_z: float = ALPHA_Z, alpha_x: float = ALPHA_X,
              tau: float | None = None, method: str = "exact") -> DMPParams:
    """Fit forcing-term weights from one or more demonstrated trajectories.

    `method='exact'` solves the pooled least-squares system over the
    normalized basis mixture and recovers in-family targets to machine
    precision; `method='lwr'` applies the classic per-basis locally weighted
    estimator instead.
    """
    if isinstance(demos, DemoTrajectory):
        demos = [demos]
    if not demos:
        raise DegenerateDemo("no demonstrations given")
    beta_z = alpha_z / 4.0
    if tau is None:
        tau = demos[0].duration
    y0 = float(demos[0].y[0])
    if g is None:
        g = float(demos[0].y[-1])
    if abs(g - y0) < 1e-12:
        raise DegenerateDemo("g equals y0: forcing term scale is zero")
    centers, widths = _basis_centers(n_basis, alpha_x)

    rows = []
    targets = []
    for demo in demos:
        x = _phase(alpha_x, tau, demo.dt, len(demo.y))
        xi = x * (g - y0)
        f_target = tau ** 2 * demo.ydd - alpha_z * (beta_z * (g - demo.y)
                                                    - tau * demo.yd)
        psi_n = _basis_matrix(x, centers, widths)
        rows.append(psi_n * xi[:, None])
        targets.append(f_target)
    M = np.vstack(rows)
    f = np.concatenate(targets)
    if method == "exact":
        w, *_ = np.linalg.lstsq(M, f, rcond=None)
    elif method == "lwr":
        num = np.zeros(n_basis)
        den = np.zeros(n_basis)
        for demo in demos:
            x = _phase(alpha_x, tau, demo.dt, len(demo.y))
            xi = x * (g - y0)
            f_target = tau ** 2 * demo.ydd - alpha_z * (beta_z * (g - demo.y)
                                                        - tau * demo.yd)
            psi = np.exp(-widths[None, :] * (x[:, None] - centers[None, :]) ** 2)
            num += (psi * (xi * f_target)[:, None]).sum(axis=0)
            den += (psi * (xi ** 2)[:, None]).sum(axis=0)
        w = np.where(den > 1e-12, num / np.maximum(den, 1e-12), 0.0)
    else:
        raise ValueError(f"unknown method {method!r}")
    return DMPParams(alpha_z=alpha_z, beta_z=beta_z, alpha_x=alpha_x, tau=tau,
                     weights=w, centers=centers, widths=widths, y0=y0, g=float(g))


@dataclass
class Rollout:
    t: np.ndarray
    y: np.ndarray
    yd: np.ndarray
    ydd: np.ndarray
    x: np.ndarray

    def as_demo(self, stride: int = 1) -> DemoTrajectory:
        return DemoTrajectory(y=self.y[::stride], yd=self.yd[::stride],
                              ydd=self.ydd[::stride],
                              dt=float(self.t[stride] - self.t[0]))


def dmp_rollout(p: DMPParams, y0: float | None = None, g: float | None = None,
                dt: float | None = None, duration: float | None = None
                ) -> Rollout:
    """Explicit-Euler integration of the primitive from rest.

    The forcing term vanishes with the phase, so the damped spring settles on
    the goal; with beta_z = alpha_z/4 the approach is monotone.
    """
    y0 = p.y0 if y0 is None else float(y0)
    g = p.g if g is None else float(g)
    if dt is None:
        dt = p.tau / 1000.0
    if dt <= 0 or (duration is not None and duration <= 0):
        raise NonPositiveDuration("dt and duration must be positive")
    if duration is None:
        duration = 2.0 * p.tau
    steps = int(round(duration / dt)) + 1
    t = np.arange(steps) * dt
    y = np.empty(steps)
    yd = np.empty(steps)
    ydd = np.empty(steps)
    xs = np.empty(steps)
    yk, zk, xk = y0, 0.0, 1.0
    scale = g - y0
    for k in range(steps):
        psi = np.exp(-p.widths * (xk - p.centers) ** 2)
        s = psi.sum()
        f = (psi @ p.weights) / s * xk * scale if s > 1e-12 else 0.0
        zdot = (p.alpha_z * (p.beta_z * (g - yk) - zk) + f) / p.tau
        y[k], yd[k], ydd[k], xs[k] = yk, zk / p.tau, zdot / p.tau, xk
        yk = yk + dt * zk / p.tau
        zk = zk + dt * zdot
        xk = xk + dt * (-p.alpha_x * xk) / p.tau
    return Rollout(t=t, y=y, yd=yd, ydd=ydd, x=xs)


def min_jerk(y0: float, g: float, duration: float, dt: float) -> DemoTrajectory:
    """Minimum-jerk reference move with analytic derivatives."""
    n = int(round(duration / dt)) + 1
    t = np.arange(n) * dt
    u = t / duration
    d = g - y0
    y = y0 + d * (10 * u ** 3 - 15 * u ** 4 + 6 * u ** 5)
    yd = d * (30 * u ** 2 - 60 * u ** 3 + 30 * u ** 4) / duration
    ydd = d * (60 * u - 180 * u ** 2 + 120 * u ** 3) / duration ** 2
    return DemoTrajectory(y=y, yd=yd, ydd=ydd, dt=dt)


# --- primitive library ------------------------------------------------------------

@dataclass
class MotionPrimitive:
    """A named end-effector motion: learned approach plus straight drive.

    `approach_offset` is where the hand settles relative to the target before
    the `drive` vector pushes or pulls the object through it.
    """
    name: str
    dmps: tuple[DMPParams, DMPParams]       # x and y dimensions
    approach_offset: tuple[float, float] = (0.0, 0.0)
    drive: tuple[float, float] = (0.0, 0.0)

    def rollout(self, start_xy, target_xy, dt: float | None = None) -> np.ndarray:
        """(T, 2) hand path from start to target+offset, then the drive line."""
        cols = []
        for dim, (s, tgt) in enumerate(zip(start_xy, target_xy)):
            p = self.dmps[dim]
            goal = tgt + self.approach_offset[dim]
            r = dmp_rollout(p, y0=s, g=goal, dt=dt)
            cols.append(r.y)
        approach = np.column_stack(cols)
        if self.drive == (0.0, 0.0):
            return approach
        n = 120
        line = approach[-1] + np.linspace(0.0, 1.0, n)[:, None] * np.asarray(self.drive)
        return np.vstack([approach, line[1:]])


def default_primitive_library(displacement=(0.0, -90.0)) -> dict:
    """Primitives for plan execution, learned from smooth reference reaches.

    pull = reach past the object, then move backward; push = reach short of
    it, then move forward.  The pick-and-place entry is cycle-based and added
    by the executor, which knows both endpoints.
    """
    demo = min_jerk(0.0, 1.0, duration=1.0, dt=0.002)
    shape = dmp_learn([demo], n_basis=N_BASIS)
    dx, dy = displacement
    lib = {
        "push": MotionPrimitive(
            name="push", dmps=(shape, shape),
            approach_offset=(-0.3 * dx, -0.3 * dy), drive=(1.3 * dx, 1.3 * dy)),
        "pull": MotionPrimitive(
            name="pull", dmps=(shape, shape),
            approach_offset=(0.3 * dx, 0.3 * dy), drive=(-1.3 * dx, -1.3 * dy)),
    }
    return lib


def export_trajectory_csv(path: str, samples: np.ndarray) -> None:
    header = "t,x,y,z,theta"
    np.savetxt(path, samples, delimiter=",", header=header, comments="")
