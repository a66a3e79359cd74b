"""HTTP/WebSocket session service exposing the demo/reproduce/plan loop.

Sessions move idle -> demonstrating -> learned -> reproducing; reshuffling is
allowed once learned.  Every mutation is serialized per session and broadcast
as an ordered event stream with monotonically increasing sequence numbers.
"""

from __future__ import annotations

import asyncio
import base64
import hashlib
import math
import secrets
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from pydantic import BaseModel

from .. import model_io, scenarios
from ..core import (DemonstrationRecorder, LearnedModel, ReproductionEngine,
                    ReproOptions)
from .._raster import encode_png
from ..errors import VslError
from ..world import Pose2, TutorOp, World, render

PHASES = ("idle", "demonstrating", "learned", "reproducing")


class OpBody(BaseModel):
    action: str = "pick-and-place"
    pick: list[float]
    place: list[float] | None = None


class ReshuffleBody(BaseModel):
    seed: int = 0


class StartBody(BaseModel):
    mode: str = "sequential"


class SessionBody(BaseModel):
    scenario: str = "alphabet"


def _pose(vals) -> Pose2:
    theta = math.radians(vals[2]) if len(vals) > 2 else 0.0
    return Pose2(float(vals[0]), float(vals[1]), theta)


def _render_payload(world: World) -> dict:
    png = encode_png(render(world))
    return {
        "width": world.width_px, "height": world.height_px,
        "render_hash": hashlib.sha256(png).hexdigest(),
        "render_png_b64": base64.b64encode(png).decode("ascii"),
        "objects": [{"id": o.id,
                     "pose": [round(o.pose.x, 2), round(o.pose.y, 2),
                              round(math.degrees(o.pose.theta), 2)]}
                    for o in world.objects],
        "landmarks": [{"id": lm.id, "kind": lm.kind, "dynamic": lm.dynamic}
                      for lm in world.landmarks],
    }


@dataclass
class Session:
    id: str
    fixture: scenarios.ScenarioFixture
    world: World
    phase: str = "idle"
    recorder: DemonstrationRecorder | None = None
    model: LearnedModel | None = None
    engine: ReproductionEngine | None = None
    mode: str = "sequential"
    event_log: list = field(default_factory=list)
    sockets: list = field(default_factory=list)
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)

    def require(self, *phases) -> None:
        if self.phase not in phases:
            raise HTTPException(
                status_code=409,
                detail=f"phase {self.phase!r} does not allow this call "
                       f"(needs one of {phases})")

    async def emit(self, etype: str, payload: dict) -> dict:
        event = {"type": etype, "payload": payload, "seq": len(self.event_log)}
        self.event_log.append(event)
        dead = []
        for ws in self.sockets:
            try:
                await ws.send_json(event)
            except Exception:
                dead.append(ws)
        for ws in dead:
            self.sockets.remove(ws)
        return event


def create_app(default_scenario: str = "alphabet") -> FastAPI:
    app = FastAPI(title="vsl session service")
    sessions: dict[str, Session] = {}
    app.state.sessions = sessions

    def get_session(sid: str) -> Session:
        if sid not in sessions:
            raise HTTPException(status_code=404, detail="unknown session")
        return sessions[sid]

    @app.post("/session", status_code=201)
    async def create_session(body: SessionBody | None = None):
        name = (body.scenario if body else None) or default_scenario
        try:
            fixture = scenarios.load_fixture(name)
        except VslError as e:
            raise HTTPException(status_code=400, detail=str(e))
        sid = secrets.token_hex(8)
        session = Session(id=sid, fixture=fixture, world=fixture.world)
        sessions[sid] = session
        await session.emit("session_created",
                           {"scenario": fixture.name,
                            "world": _render_payload(session.world)})
        return {"id": sid, "scenario": fixture.name, "phase": session.phase}

    @app.get("/session/{sid}/world")
    async def get_world(sid: str):
        s = get_session(sid)
        return {"phase": s.phase, **_render_payload(s.world)}

    @app.post("/session/{sid}/demo/op")
    async def demo_op(sid: str, body: OpBody):
        s = get_session(sid)
        async with s.lock:
            s.require("idle", "demonstrating")
            if s.recorder is None:
                s.recorder = DemonstrationRecorder(s.world)
            op = TutorOp(action=body.action, pick=_pose(body.pick),
                         place=None if body.place is None else _pose(body.place))
            try:
                rec = s.recorder.apply(op)
            except VslError as e:
                raise HTTPException(status_code=422, detail=str(e))
            s.world = s.recorder.world
            s.phase = "demonstrating"
            await s.emit("demo_op", {
                "op_index": rec.index, "action": rec.action,
                "eta": len(s.recorder.ops),
                "world": _render_payload(s.world)})
            return {"op_index": rec.index, "action": rec.action,
                    "eta": len(s.recorder.ops)}

    @app.post("/session/{sid}/demo/finish")
    async def demo_finish(sid: str):
        s = get_session(sid)
        async with s.lock:
            s.require("demonstrating")
            s.model = s.recorder.finish()
            s.phase = "learned"
            await s.emit("demo_finished", {"eta": s.model.eta,
                                           "policy": list(s.model.policy)})
            return {"eta": s.model.eta, "policy": list(s.model.policy),
                    "phase": s.phase}

    @app.post("/session/{sid}/reshuffle")
    async def reshuffle(sid: str, body: ReshuffleBody):
        s = get_session(sid)
        async with s.lock:
            s.require("learned")
            s.world, offsets = scenarios.reshuffle(s.fixture, body.seed)
            await s.emit("reshuffled", {
                "seed": body.seed,
                "landmark_offsets": {k: list(v) for k, v in offsets.items()},
                "world": _render_payload(s.world)})
            return {"seed": body.seed, "phase": s.phase}

    @app.post("/session/{sid}/reproduce/start")
    async def reproduce_start(sid: str, body: StartBody | None = None):
        s = get_session(sid)
        async with s.lock:
            s.require("learned")
            mode = (body.mode if body else "sequential")
            if mode not in ("sequential", "reactive"):
                raise HTTPException(status_code=422, detail=f"bad mode {mode!r}")
            s.mode = mode
            s.engine = ReproductionEngine(
                s.world, s.model, mode=mode,
                options=ReproOptions(match_mode=s.fixture.place_match_mode))
            s.phase = "reproducing"
            await s.emit("reproduce_started", {"mode": mode})
            return {"mode": mode, "phase": s.phase}

    def _done_payload(done) -> dict:
        return {"op_index": done.op_index, "action": done.action,
                "object": done.object_id,
                "pick": [round(done.pick.x, 2), round(done.pick.y, 2)],
                "place": None if done.place is None else
                [round(done.place.x, 2), round(done.place.y, 2)],
                "score_pre": round(done.score_pre, 4),
                "score_post": round(done.score_post, 4)}

    @app.post("/session/{sid}/reproduce/step")
    async def reproduce_step(sid: str):
        s = get_session(sid)
        async with s.lock:
            s.require("reproducing")
            if s.mode == "reactive":
                raise HTTPException(status_code=409,
                                    detail="reactive sessions step on intervene")
            if s.engine.cursor >= s.model.eta:
                return {"done": True, "remaining": 0}
            try:
                done = s.engine.step()
            except VslError as e:
                await s.emit("step_failed", {"detail": str(e)})
                raise HTTPException(status_code=422, detail=str(e))
            s.world = s.engine.world
            payload = _done_payload(done)
            payload["world"] = _render_payload(s.world)
            payload["remaining"] = s.model.eta - s.engine.cursor
            await s.emit("robot_step", payload)
            return {"done": s.engine.cursor >= s.model.eta,
                    "remaining": s.model.eta - s.engine.cursor,
                    "step": _done_payload(done)}

    @app.post("/session/{sid}/intervene")
    async def intervene(sid: str, body: OpBody):
        s = get_session(sid)
        async with s.lock:
            s.require("reproducing")
            op = TutorOp(action=body.action, pick=_pose(body.pick),
                         place=None if body.place is None else _pose(body.place))
            try:
                response = s.engine.intervene(op)
            except VslError as e:
                raise HTTPException(status_code=422, detail=str(e))
            s.world = s.engine.world
            payload = {"world": _render_payload(s.world)}
            if response is not None:
                payload["response"] = _done_payload(response)
            await s.emit("intervened", payload)
            out = {"phase": s.phase,
                   "cursor": getattr(s.engine, "cursor", None)}
            if response is not None:
                out["response"] = _done_payload(response)
            return out

    @app.get("/session/{sid}/pddl")
    async def get_pddl(sid: str):
        from .. import symbolic
        s = get_session(sid)
        if s.model is None:
            raise HTTPException(status_code=409, detail="no learned model yet")
        rules = symbolic.extract_rules(s.model)
        if rules:
            schemas = symbolic.generalize_rules([rules])
        else:
            schemas = [symbolic.ActionSchema(
                name="move", params=(("?b", "block"),),
                preconditions=(),
                effects=(symbolic.Literal("rearranged", ("?b",), True),))]
        objects = tuple(sorted({(op.symbol.name, "block") for op in s.model.ops}
                               | {(oid, "block") for op in s.model.ops
                                  for oid, _a, _p in op.context_pre}))
        first, last = s.model.ops[0], s.model.ops[-1]
        init_preds = set(first.c_pre)
        for _oid, _attrs, preds in first.context_pre:
            init_preds |= set(preds)
        init = frozenset((p.name, p.args) for p in init_preds if p.value)
        goal_preds = set(last.c_post)
        for _oid, _attrs, preds in last.context_post:
            goal_preds |= set(preds)
        goal = tuple(sorted(
            (symbolic.Literal(p.name, p.args, p.value) for p in goal_preds),
            key=lambda l: (l.name, l.args)))
        if not goal:
            goal = tuple(symbolic.Literal("rearranged", (op.symbol.name,), True)
                         for op in s.model.ops)
        problem = symbolic.PlanningProblem(
            name=f"{s.fixture.name}-task", domain_name=f"{s.fixture.name}-skills",
            objects=objects, init=init, goal=goal)
        domain_text, problem_text = symbolic.emit_pddl(schemas, problem)
        return {"domain": domain_text, "problem": problem_text}

    @app.get("/session/{sid}/model")
    async def get_model(sid: str):
        s = get_session(sid)
        if s.model is None:
            raise HTTPException(status_code=409, detail="no learned model yet")
        manifest, doc, assets = model_io.model_documents(s.model)
        return {"manifest": manifest, "model": doc,
                "assets": {k: hashlib.sha256(v).hexdigest()
                           for k, v in sorted(assets.items())}}

    @app.websocket("/session/{sid}/events")
    async def events(ws: WebSocket, sid: str, since: int = 0):
        if sid not in sessions:
            await ws.close(code=4404)
            return
        s = sessions[sid]
        await ws.accept()
        for event in s.event_log[since:]:
            await ws.send_json(event)
        s.sockets.append(ws)
        try:
            while True:
                await ws.receive_text()
        except WebSocketDisconnect:
            if ws in s.sockets:
                s.sockets.remove(ws)

    return app
