"""Command-line pipelines: demo recording, reproduction, repeatability
evaluation, planning, primitive-motion export, point-cloud pipeline, service.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .. import model_io, scenarios
from .._raster import encode_png
from ..core import ReproductionEngine, ReproOptions, record_demonstration
from ..errors import MultiObjectChange, ParseError, VslError
from ..world import render


def _load_fixture_or_exit(path: str):
    try:
        return scenarios.load_fixture(path)
    except ParseError as e:
        print(f"scenario not found or invalid: {e}", file=sys.stderr)
        raise SystemExit(2)


def cmd_demo(args) -> int:
    fx = _load_fixture_or_exit(args.scenario)
    out = args.out or "model_out"
    os.makedirs(out, exist_ok=True)
    try:
        model = record_demonstration(fx.world, fx.script)
    except MultiObjectChange as e:
        print(f"recording failed: {e}", file=sys.stderr)
        return 3
    except VslError as e:
        print(f"recording failed: {e}", file=sys.stderr)
        return 3
    model_io.save_model(model, out)
    world = fx.world
    from ..world import apply_operation
    for i, op in enumerate(fx.script, start=1):
        with open(os.path.join(out, f"frame_{i:04d}_pre.png"), "wb") as f:
            f.write(encode_png(render(world)))
        world = apply_operation(world, op)
        with open(os.path.join(out, f"frame_{i:04d}_post.png"), "wb") as f:
            f.write(encode_png(render(world)))
    print(f"recorded {model.eta} operations into {out}")
    return 0


def cmd_reproduce(args) -> int:
    fx = _load_fixture_or_exit(args.scenario)
    model = model_io.load_model(args.model) if args.model \
        else record_demonstration(fx.world, fx.script)
    world, _offsets = scenarios.reshuffle(fx, args.seed)
    options = ReproOptions(match_mode=args.match_mode or fx.place_match_mode)
    engine = ReproductionEngine(world, model, options=options)
    out = args.out
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "frame_0000.png"), "wb") as f:
            f.write(encode_png(render(world)))
    rows = []
    code = 0
    try:
        while engine.cursor < model.eta:
            done = engine.step()
            rows.append({"op": done.op_index, "action": done.action,
                         "object": done.object_id,
                         "pick": [round(done.pick.x, 2), round(done.pick.y, 2)],
                         "place": None if done.place is None else
                         [round(done.place.x, 2), round(done.place.y, 2)],
                         "score_pre": round(done.score_pre, 4),
                         "score_post": round(done.score_post, 4)})
            if out and args.render:
                name = f"frame_{done.op_index:04d}.png"
                with open(os.path.join(out, name), "wb") as f:
                    f.write(encode_png(render(engine.world)))
    except VslError as e:
        print(f"reproduction halted: {e}", file=sys.stderr)
        code = 4
    print(json.dumps({"scenario": fx.name, "seed": args.seed, "steps": rows},
                     indent=1, sort_keys=True))
    return code


def cmd_eval(args) -> int:
    from .evaluate import evaluate_scenario, format_report_table
    fx = _load_fixture_or_exit(args.scenario)
    match_mode = None
    if args.adaptive:
        match_mode = "adaptive"
    elif args.fixed_frame:
        match_mode = "fixed"
    report = evaluate_scenario(fx, trials=args.trials, seed=args.seed,
                               match_mode=match_mode,
                               place_size=args.frame_size,
                               identity=args.identity)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(report, f, indent=1, sort_keys=True)
    else:
        print(json.dumps(report, indent=1, sort_keys=True))
    print(format_report_table(report), file=sys.stderr)
    return 0


def cmd_plan(args) -> int:
    from .. import symbolic
    with open(args.domain, encoding="utf-8") as f:
        _name, schemas = symbolic.parse_domain(f.read())
    with open(args.problem, encoding="utf-8") as f:
        problem = symbolic.parse_problem(f.read())
    try:
        steps = symbolic.plan(problem, schemas)
    except VslError as e:
        print(f"no plan: {e}", file=sys.stderr)
        return 5
    for name, plan_args in steps:
        print(f"({name} {' '.join(plan_args)})")
    return 0


def cmd_dmp(args) -> int:
    from .. import motion
    if args.input:
        data = np.loadtxt(args.input, delimiter=",", skiprows=1)
        dt = float(data[1, 0] - data[0, 0])
        demo = motion.DemoTrajectory(y=data[:, 1], yd=data[:, 2],
                                     ydd=data[:, 3], dt=dt)
    else:
        demo = motion.min_jerk(0.0, 1.0, duration=1.0, dt=0.002)
    params = motion.dmp_learn([demo], n_basis=args.basis)
    rollout = motion.dmp_rollout(params, dt=demo.dt, duration=demo.duration)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "dmp_params.json"), "w") as f:
        f.write(params.to_json())
    table = np.column_stack([rollout.t, rollout.y, rollout.yd, rollout.ydd])
    np.savetxt(os.path.join(args.out, "rollout.csv"), table, delimiter=",",
               header="t,y,yd,ydd", comments="")
    rmse = float(np.sqrt(np.mean((rollout.y[:len(demo.y)] - demo.y) ** 2)))
    print(f"learned {params.n_basis} basis weights; rollout RMSE {rmse:.6f}")
    return 0


def cmd_cloud(args) -> int:
    from .. import vsl3d
    os.makedirs(args.out, exist_ok=True)
    vp = (0.3, 0.25, 0.9)
    before = vsl3d.tabletop_scene(
        [((0.10, 0.10, 0.05), (0.10, 0.08, 0.10))],
        table_size=(0.6, 0.5), spacing=0.004, viewpoint=vp)
    after = vsl3d.tabletop_scene(
        [((0.20, 0.10, 0.05), (0.10, 0.08, 0.10))],
        table_size=(0.6, 0.5), spacing=0.004, viewpoint=vp)
    grid = vsl3d.VoxelGrid(leaf=0.002)
    bounds = ((-0.35, 0.35), (-0.3, 0.3), (-0.05, 0.4))
    va = vsl3d.voxelize(vsl3d.passthrough_filter(before, bounds), grid)
    vb = vsl3d.voxelize(vsl3d.passthrough_filter(after, bounds), grid)
    residual = vsl3d.knn_subtract(va, vb, dist_threshold=0.01)
    residual = vsl3d.estimate_normals(residual, radius=0.012, viewpoint=vp)
    tpl = vsl3d.box_cloud((0.10, 0.10, 0.05), (0.10, 0.08, 0.10),
                          spacing=0.004, viewpoint=vp)
    t_true = vsl3d.rotz(math.radians(4.0))
    t_true[:3, 3] = (0.10, 0.0, 0.0)
    icp = vsl3d.icp_match(tpl, vsl3d.transform_cloud(tpl, t_true), corr_dist=0.08)
    vsl3d.save_ply(os.path.join(args.out, "before.ply"), va)
    vsl3d.save_ply(os.path.join(args.out, "after.ply"), vb)
    vsl3d.save_ply(os.path.join(args.out, "residual.ply"), residual)
    summary = {"before_points": len(va), "after_points": len(vb),
               "residual_points": len(residual),
               "icp_fitness": round(icp.fitness, 4),
               "icp_iterations": icp.iterations}
    with open(os.path.join(args.out, "summary.json"), "w") as f:
        json.dump(summary, f, indent=1, sort_keys=True)
    print(json.dumps(summary, indent=1, sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    app = create_app(default_scenario=args.scenario)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="vsl",
        description="Visuospatial skill learning over a simulated tabletop")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("demo", help="record a tutor demonstration")
    d.add_argument("--scenario", required=True,
                   help="scenario file or builtin name")
    d.add_argument("--out", help="model output directory")
    d.set_defaults(fn=cmd_demo)

    r = sub.add_parser("reproduce", help="reproduce a learned model")
    r.add_argument("--scenario", required=True)
    r.add_argument("--model", help="model directory (defaults to re-recording)")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--match-mode", choices=["fixed", "adaptive"])
    r.add_argument("--out", help="directory for rendered frames")
    r.add_argument("--render", action="store_true")
    r.set_defaults(fn=cmd_reproduce)

    e = sub.add_parser("eval", help="repeatability over seeded reshuffles")
    e.add_argument("--scenario", required=True)
    e.add_argument("--trials", type=int, default=100)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--fixed-frame", action="store_true")
    e.add_argument("--adaptive", action="store_true")
    e.add_argument("--frame-size", type=int)
    e.add_argument("--identity", action="store_true",
                   help="replay in the unshuffled demo world")
    e.add_argument("--out", help="write the JSON report here")
    e.set_defaults(fn=cmd_eval)

    pl = sub.add_parser("plan", help="solve a planning problem")
    pl.add_argument("domain")
    pl.add_argument("problem")
    pl.set_defaults(fn=cmd_plan)

    dm = sub.add_parser("dmp", help="learn and roll out a motion primitive")
    dm.add_argument("--input", help="demo CSV with columns t,y,yd,ydd")
    dm.add_argument("--basis", type=int, default=20)
    dm.add_argument("--out", default="dmp_out")
    dm.set_defaults(fn=cmd_dmp)

    cl = sub.add_parser("cloud", help="run the 3D change-detection pipeline")
    cl.add_argument("--out", default="cloud_out")
    cl.set_defaults(fn=cmd_cloud)

    sv = sub.add_parser("serve", help="run the HTTP/WebSocket session service")
    sv.add_argument("--port", type=int, default=8341)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--scenario", default="alphabet")
    sv.set_defaults(fn=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
