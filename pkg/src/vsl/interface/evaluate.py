"""Repeatability harness: learn once, reproduce across seeded reshuffles, and
report per-operation failure rates and pose errors.

Visually identical objects are interchangeable, so achieved poses are scored
against goal poses per sprite-identity group under a best assignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import scenarios
from ..core import (LearnedModel, ReproductionEngine, ReproOptions,
                    record_demonstration)
from ..errors import VslError
from ..scenarios import ScenarioFixture
from ..world import Pose2, TutorOp, World, normalize_angle

POS_TOL_PX = 5.0
ANGLE_TOL_DEG = 3.0


@dataclass
class OpOutcome:
    trial: int
    op_index: int
    ok: bool
    err_px: float = float("nan")
    err_deg: float = float("nan")
    detail: str = ""


def _sprite_groups(world: World) -> dict[str, list[str]]:
    groups: dict = {}
    for o in world.objects:
        key = o.sprite.tobytes()
        groups.setdefault(key, []).append(o.id)
    return {ids[0]: ids for ids in groups.values()}


def _assignment_errors(achieved: dict, expected: dict, groups) -> dict:
    """Per-object pose error allowing identical objects to swap roles."""
    errs: dict = {}
    for ids in groups.values():
        relevant = [i for i in ids if i in expected]
        if not relevant:
            continue
        pool = list(relevant)
        for oid in relevant:
            best = None
            for cand in pool:
                a = achieved[cand]
                e = expected[oid]
                d = math.hypot(a.x - e.x, a.y - e.y)
                if best is None or d < best[0]:
                    best = (d, cand)
            d, cand = best
            a, e = achieved[cand], expected[oid]
            errs[oid] = (d, abs(math.degrees(normalize_angle(a.theta - e.theta))))
            pool.remove(cand)
    return errs


def _expected_goals(fx: ScenarioFixture, offsets: dict) -> dict[str, Pose2]:
    """Demo goal poses, re-anchored by dynamic landmark displacement."""
    goals = fx.goal_poses()
    out = {}
    for oid, g in goals.items():
        ex, ey = g.x, g.y
        for lmid, (dx, dy) in offsets.items():
            lm = next(l for l in fx.world.landmarks if l.id == lmid)
            cx, cy = lm.center()
            if math.hypot(cx - g.x, cy - g.y) <= 200.0:
                ex, ey = g.x + dx, g.y + dy
                break
        out[oid] = Pose2(ex, ey, g.theta)
    return out


def _score_final(fx, engine, expected, trial, outcomes, executed_ids):
    groups = _sprite_groups(fx.world)
    achieved = {o.id: o.pose for o in engine.world.objects}
    errs = _assignment_errors(achieved, expected, groups)
    for rec, oid in executed_ids:
        if oid is None or oid not in errs:
            continue
        d, ddeg = errs[oid]
        ok = d <= POS_TOL_PX and ddeg <= ANGLE_TOL_DEG
        outcomes.append(OpOutcome(trial=trial, op_index=rec, ok=ok,
                                  err_px=d, err_deg=ddeg))


def _run_sequential(fx: ScenarioFixture, model: LearnedModel, trial: int,
                    seed: int, options: ReproOptions, outcomes: list,
                    identity: bool = False) -> int:
    if identity:
        world, offsets = fx.world, {}
    else:
        world, offsets = scenarios.reshuffle(fx, seed)
    expected = _expected_goals(fx, offsets)
    engine = ReproductionEngine(world, model, options=options)
    ambiguous = 0
    executed = []
    try:
        while engine.cursor < model.eta:
            done = engine.step()
            executed.append((done.op_index, done.object_id))
    except VslError as e:
        if "Ambiguous" in str(e):
            ambiguous += 1
        for rec in model.ops[engine.cursor:]:
            outcomes.append(OpOutcome(trial=trial, op_index=rec.index, ok=False,
                                      detail=str(e)))
    _score_final(fx, engine, expected, trial, outcomes, executed)
    return ambiguous


def _run_classification(fx: ScenarioFixture, model: LearnedModel, trial: int,
                        seed: int, options: ReproOptions, outcomes: list) -> int:
    from ..world import SceneObject, add_object, remove_objects
    base, offsets = scenarios.reshuffle(fx, seed)
    expected = _expected_goals(fx, offsets)
    moved = [oid for oid, _ in fx.op_targets()]
    world = remove_objects(base, moved)
    rng = scenarios._fixture_rng(fx.name + ":present", seed)
    order = list(moved)
    rng.shuffle(order)
    engine = ReproductionEngine(world, model, mode="reactive", options=options)
    executed = []
    for oid in order:
        template = base.object_by_id(oid)
        pose = scenarios.free_pose(fx, engine.world, rng,
                                   template.bbox_size() / 2.0)
        engine.world = add_object(engine.world, SceneObject(
            id=oid, sprite=template.sprite, alpha=template.alpha, pose=pose,
            z_level=template.z_level, symbol=template.symbol))
        done = engine.trigger()
        if done is None:
            outcomes.append(OpOutcome(trial=trial, op_index=0, ok=False,
                                      detail=f"no reactive match for {oid}"))
            continue
        executed.append((done.op_index, done.object_id))
    _score_final(fx, engine, expected, trial, outcomes, executed)
    return 0


def _run_domino(fx: ScenarioFixture, model: LearnedModel, trial: int,
                seed: int, options: ReproOptions, outcomes: list) -> int:
    world, _ = scenarios.reshuffle(fx, seed)
    rng = scenarios._fixture_rng(fx.name + ":turns", seed)
    engine = ReproductionEngine(world, model, mode="reactive", options=options)
    targets = fx.op_targets()
    executed = []
    expected: dict[str, Pose2] = {}
    for k in range(0, len(targets), 2):
        a_id, a_goal = targets[k]
        b_id, b_goal = targets[k + 1]
        # The tutor opens pair k at a jittered slot in the free play area;
        # the robot's tile must land at the demonstrated pair offset.
        a_obj = engine.world.object_by_id(a_id)
        spot = Pose2(120.0 + 130.0 * (k // 2) + float(rng.integers(-10, 11)),
                     95.0 + float(rng.integers(-10, 11)))
        tutor_op = TutorOp(pick=Pose2(a_obj.pose.x, a_obj.pose.y),
                           place=Pose2(spot.x, spot.y))
        done = engine.intervene(tutor_op)
        expected[b_id] = Pose2(spot.x + (b_goal.x - a_goal.x),
                               spot.y + (b_goal.y - a_goal.y), b_goal.theta)
        if done is None:
            outcomes.append(OpOutcome(trial=trial, op_index=k + 2, ok=False,
                                      detail=f"no reactive response after {a_id}"))
            continue
        executed.append((done.op_index, done.object_id))
    _score_final(fx, engine, expected, trial, outcomes, executed)
    return 0


def evaluate_scenario(fx: ScenarioFixture, trials: int, seed: int,
                      match_mode: str | None = None,
                      place_size: int | None = None,
                      identity: bool = False) -> dict:
    """Learn the fixture once, reproduce over seeded reshuffles, and report.

    With `identity` the demo world is replayed as-is (no reshuffle), which
    must reproduce the demonstrated final configuration exactly.
    """
    model = record_demonstration(fx.world, fx.script)
    options = ReproOptions(match_mode=match_mode or fx.place_match_mode,
                           place_size=place_size)
    outcomes: list[OpOutcome] = []
    ambiguous = 0
    for k in range(trials):
        trial_seed = seed * 100003 + k
        if identity or fx.kind == "sequential":
            ambiguous += _run_sequential(fx, model, k, trial_seed, options,
                                         outcomes, identity=identity)
        elif fx.kind == "classification":
            ambiguous += _run_classification(fx, model, k, trial_seed, options,
                                             outcomes)
        else:
            ambiguous += _run_domino(fx, model, k, trial_seed, options, outcomes)
    total = len(outcomes)
    failures = sum(1 for o in outcomes if not o.ok)
    errs = [o.err_px for o in outcomes if o.ok]
    degs = [o.err_deg for o in outcomes if o.ok]
    report = {
        "scenario": fx.name,
        "trials": trials,
        "seed": seed,
        "ops_total": total,
        "failures": failures,
        "failure_rate": round(failures / total, 6) if total else 0.0,
        "ambiguous": ambiguous,
        "pose_error_px": {
            "mean": round(float(np.mean(errs)), 4) if errs else None,
            "p95": round(float(np.quantile(errs, 0.95)), 4) if errs else None,
            "max": round(float(np.max(errs)), 4) if errs else None,
        },
        "pose_error_deg": {
            "mean": round(float(np.mean(degs)), 4) if degs else None,
            "max": round(float(np.max(degs)), 4) if degs else None,
        },
        "failed_ops": [
            {"trial": o.trial, "op": o.op_index, "detail": o.detail}
            for o in outcomes if not o.ok],
    }
    return report


def format_report_table(report: dict) -> str:
    rows = [
        ("scenario", report["scenario"]),
        ("trials", report["trials"]),
        ("operations", report["ops_total"]),
        ("failures", report["failures"]),
        ("failure rate", f"{report['failure_rate']:.4f}"),
        ("ambiguous", report["ambiguous"]),
        ("pos err mean/px", report["pose_error_px"]["mean"]),
        ("pos err max/px", report["pose_error_px"]["max"]),
        ("angle err max/deg", report["pose_error_deg"]["max"]),
    ]
    width = max(len(str(k)) for k, _ in rows)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)
