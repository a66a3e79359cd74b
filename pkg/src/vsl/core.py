"""Skill recording and reproduction: the full observe/diff/match loop.

Recording walks a tutor script, capturing pre/post observations per operation,
isolating the moved object, extracting spatial constraints against landmarks
and identifying the executed action.  Reproduction re-finds each operation's
pick and place locations in a (possibly reshuffled) world and replays the
learned policy either sequentially or reactively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import perception
from .errors import (Ambiguous, AmbiguousAction, MatchFailed, NoMatch,
                     UnknownAction, VslError)
from .perception import (AMBIGUITY_MARGIN, NO_MATCH_FLOOR, Frame, Observation,
                         capture_observation, diff_object, extract_features,
                         find_match_candidates)
from .world import (DemoScript, Landmark, ObjectSymbol, Pose2, TutorOp, World,
                    apply_operation, normalize_angle, pick_object_at, render)

# A destination is re-anchored to a dynamic landmark found within this radius.
ANCHOR_RADIUS = 130.0


# --- spatial predicates -------------------------------------------------------

@dataclass(frozen=True)
class Predicate:
    name: str
    args: tuple[str, ...]
    value: bool


PredicateSet = frozenset


def _line_side(lm: Landmark, x: float, y: float) -> bool:
    nx, ny = lm.normal()
    return (x - lm.point[0]) * nx + (y - lm.point[1]) * ny > 0.0


def _in_rect(lm: Landmark, x: float, y: float) -> bool:
    rx, ry, rw, rh = lm.rect
    return rx <= x <= rx + rw and ry <= y <= ry + rh


def eval_predicates(symbol: ObjectSymbol, pose: Pose2, landmarks) -> PredicateSet:
    preds = set()
    for lm in landmarks:
        if lm.kind == "line":
            name = lm.predicate or "above"
            preds.add(Predicate(name, (symbol.name,),
                                _line_side(lm, pose.x, pose.y)))
        else:
            name = lm.predicate or "in_region"
            preds.add(Predicate(name, (symbol.name, lm.id),
                                _in_rect(lm, pose.x, pose.y)))
    return frozenset(preds)


def get_constraint(symbol: ObjectSymbol, pre: Pose2, post: Pose2,
                   landmarks) -> tuple[PredicateSet, PredicateSet]:
    """Boolean spatial relations of one object before and after an action."""
    return (eval_predicates(symbol, pre, landmarks),
            eval_predicates(symbol, post, landmarks))


# --- action identification ------------------------------------------------------

@dataclass(frozen=True)
class ActionRule:
    """Registered action with the predicate-flip signatures it explains."""
    name: str
    signatures: frozenset  # of frozensets of (predicate_name, '+'|'-')


DEFAULT_ACTIONS = (
    ActionRule("pick-and-place", frozenset({frozenset()})),
    ActionRule("push", frozenset({frozenset({("far", "+")})})),
    ActionRule("pull", frozenset({frozenset({("far", "-")})})),
    ActionRule("place-in", frozenset({
        frozenset({("in_region", "+")}),
        frozenset({("in_region", "+"), ("in_region", "-")}),
    })),
)


def flip_delta(c_pre: PredicateSet, c_post: PredicateSet):
    """Predicates whose truth value changed, as ((name, args), after) pairs."""
    pre = {(p.name, p.args): p.value for p in c_pre}
    post = {(p.name, p.args): p.value for p in c_post}
    out = []
    for key, after in post.items():
        if key in pre and pre[key] != after:
            out.append((key, after))
    return tuple(sorted(out))


def get_action(action_set, c_pre: PredicateSet, c_post: PredicateSet) -> str:
    """Identify the registered action explaining an observed predicate delta."""
    if not action_set:
        raise UnknownAction("empty action set")
    delta = flip_delta(c_pre, c_post)
    signature = frozenset((name, "+" if after else "-")
                          for (name, _args), after in delta)
    hits = [r for r in action_set if signature in r.signatures]
    if not hits:
        raise UnknownAction(f"no registered action matches delta {sorted(signature)}")
    if len(hits) > 1:
        raise AmbiguousAction(", ".join(r.name for r in hits))
    return hits[0].name


# --- recording -------------------------------------------------------------------

@dataclass(frozen=True)
class FrameConfig:
    """Template sizing: pick templates use the biggest object's bounding box,
    place templates a multiple of it; capture frames span the whole world."""
    pre_pick_scale: float = 1.0
    pre_place_scale: float = 2.5
    min_template: int = 24


@dataclass
class OpRecord:
    index: int                      # 1-based
    action: str
    pre_obs: Observation
    post_obs: Observation
    pose_pre: Pose2
    pose_post: Pose2                # theta holds the measured demo rotation delta
    object_patch: np.ndarray
    object_mask: np.ndarray
    source_mask: np.ndarray
    dest_mask: np.ndarray
    features: perception.FeatureSet
    symbol: ObjectSymbol
    c_pre: PredicateSet
    c_post: PredicateSet
    context_pre: tuple = ()
    context_post: tuple = ()
    anchor_landmark: str | None = None
    anchor_offset: tuple[float, float] = (0.0, 0.0)
    object_size: int = 0


@dataclass
class LearnedModel:
    ops: tuple[OpRecord, ...]
    frames: FrameConfig
    world_size: tuple[int, int]
    background_color: tuple[int, int, int]
    label_sprites: dict = field(default_factory=dict)

    @property
    def eta(self) -> int:
        return len(self.ops)

    @property
    def pre_obs(self):
        return tuple(o.pre_obs for o in self.ops)

    @property
    def post_obs(self):
        return tuple(o.post_obs for o in self.ops)

    @property
    def poses_pre(self):
        return tuple(o.pose_pre for o in self.ops)

    @property
    def poses_post(self):
        return tuple(o.pose_post for o in self.ops)

    @property
    def symbols(self):
        return tuple(o.symbol for o in self.ops)

    @property
    def features(self):
        return tuple(o.features for o in self.ops)

    @property
    def policy(self):
        return tuple(o.action for o in self.ops)

    @property
    def constraints_pre(self):
        return tuple(o.c_pre for o in self.ops)

    @property
    def constraints_post(self):
        return tuple(o.c_post for o in self.ops)

    def biggest_object_size(self) -> int:
        return max((o.object_size for o in self.ops), default=48)

    def pick_template_size(self) -> int:
        return max(self.frames.min_template,
                   int(round(self.biggest_object_size() * self.frames.pre_pick_scale)))

    def place_template_size(self) -> int:
        return max(self.frames.min_template,
                   int(round(self.biggest_object_size() * self.frames.pre_place_scale)))


def _refine_rotation_ncc(obj_rgb, obj_mask, post_patch, dest_pose, frame,
                         estimate: float, half_range_deg: float = 2.5) -> float:
    """Polish a rotation estimate by sweeping a rotated-template correlation
    around it at the destination; parabolic interpolation over the peak."""
    from scipy import ndimage

    from ._raster import rotate_sprite
    x0, y0 = frame.top_left()
    # Compare interior pixels only: the blob boundary carries resampling blur
    # and whatever the object occludes at either end of the move.
    core_mask = ndimage.binary_erosion(obj_mask, iterations=3)
    if core_mask.sum() < 32:
        core_mask = obj_mask
    alpha = np.where(core_mask, 255, 0).astype(np.uint8)
    ys, xs = np.nonzero(obj_mask)
    ocx, ocy = float(xs.mean()), float(ys.mean())
    angles = estimate + np.radians(
        np.linspace(-half_range_deg, half_range_deg, 21))
    scores = np.full(len(angles), -2.0)
    for k, ang in enumerate(angles):
        rgb, a = rotate_sprite(obj_rgb, alpha, ang)
        mask = a >= 128
        if mask.sum() < 16:
            continue
        # The blob centroid rotates about the patch center with the sprite.
        ccx = (obj_rgb.shape[1] - 1) / 2.0
        ccy = (obj_rgb.shape[0] - 1) / 2.0
        c, s = math.cos(ang), math.sin(ang)
        rx = c * (ocx - ccx) - s * (ocy - ccy) + (rgb.shape[1] - 1) / 2.0
        ry = s * (ocx - ccx) + c * (ocy - ccy) + (rgb.shape[0] - 1) / 2.0
        tx = int(round(dest_pose.x - x0 - rx))
        ty = int(round(dest_pose.y - y0 - ry))
        best = -2.0
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                best = max(best, perception.ncc_at(post_patch, rgb, mask,
                                                   tx + dx, ty + dy))
        scores[k] = best
    k = int(np.argmax(scores))
    if scores[k] <= -1.0:
        return estimate
    if 0 < k < len(angles) - 1:
        lo, mid, hi = scores[k - 1], scores[k], scores[k + 1]
        denom = lo - 2 * mid + hi
        if denom < -1e-12:
            off = 0.5 * (lo - hi) / denom
            return float(angles[k] + off * (angles[1] - angles[0]))
    return float(angles[k])


def _measure_demo_rotation(diff: perception.DiffResult, post_patch: np.ndarray,
                           frame: Frame) -> float:
    """Rotation the tutor applied while moving the object: a coarse feature
    estimate polished by a rotational correlation sweep at the destination."""
    obj = diff.object_patch
    if obj.shape[0] < 16 or obj.shape[1] < 16:
        return 0.0
    estimate = 0.0
    fs_obj = extract_features(obj, mask=diff.object_mask)
    if len(fs_obj) >= 4:
        x0, y0 = frame.top_left()
        dy, dx = np.nonzero(diff.dest_mask)
        if dx.size:
            pad = 6
            bx0 = max(int(dx.min()) - pad, 0)
            by0 = max(int(dy.min()) - pad, 0)
            bx1 = min(int(dx.max()) + 1 + pad, post_patch.shape[1])
            by1 = min(int(dy.max()) + 1 + pad, post_patch.shape[0])
            dest_patch = post_patch[by0:by1, bx0:bx1]
            if dest_patch.shape[0] >= 16 and dest_patch.shape[1] >= 16:
                fs_dest = extract_features(dest_patch)
                pairs = perception.match_features(fs_obj, fs_dest, ratio=0.85)
                if len(pairs) >= 4:
                    corr = [((fs_obj.keypoints[i][0], fs_obj.keypoints[i][1]),
                             (fs_dest.keypoints[j][0], fs_dest.keypoints[j][1]))
                            for i, j in pairs]
                    try:
                        t, _ = perception.estimate_transform(
                            corr, model="similarity", iters=200,
                            inlier_tol_px=2.5, seed=0)
                        d = perception.decompose(t)
                        estimate = perception.extract_rotation(d, "standard")
                    except VslError:
                        estimate = 0.0
    return _refine_rotation_ncc(obj, diff.object_mask, post_patch,
                                diff.dest_pose, frame, estimate)


def _nearest_dynamic_landmark(detected, dest: Pose2):
    best = None
    for lm in detected:
        cx, cy = lm.center()
        dist = math.hypot(cx - dest.x, cy - dest.y)
        if dist <= ANCHOR_RADIUS and (best is None or dist < best[0]):
            best = (dist, lm)
    return best[1] if best else None


class DemonstrationRecorder:
    """Incrementally records tutor operations against a live world."""

    def __init__(self, world: World, frames: FrameConfig | None = None,
                 action_set=DEFAULT_ACTIONS):
        self.world = world
        self.frames = frames or FrameConfig()
        self.action_set = action_set
        self.ops: list[OpRecord] = []
        self._label_sprites = {
            lm.id: (lm.sprite, lm.sprite_alpha)
            for lm in world.landmarks if lm.kind == "label" and lm.sprite is not None}
        self._dynamic_ids = {lm.id for lm in world.landmarks if lm.dynamic}

    def _world_frame(self) -> Frame:
        return Frame(center=(self.world.width_px / 2.0, self.world.height_px / 2.0),
                     width=self.world.width_px, height=self.world.height_px)

    def apply(self, op: TutorOp) -> OpRecord:
        index = len(self.ops) + 1
        frame = self._world_frame()
        fill = self.world.background_color
        pre_raster = render(self.world)
        target = pick_object_at(self.world, op.pick.x, op.pick.y)
        new_world = apply_operation(self.world, op)
        post_raster = render(new_world)
        pre_obs = capture_observation(pre_raster, frame, "pre", index, fill)
        post_obs = capture_observation(post_raster, frame, "post", index, fill)
        try:
            diff = diff_object(pre_obs, post_obs)
        except VslError as e:
            raise type(e)(f"op {index}: {e}") from e

        delta_theta = _measure_demo_rotation(diff, post_obs.patch, frame)
        pose_pre = diff.source_pose
        pose_post = Pose2(diff.dest_pose.x, diff.dest_pose.y, delta_theta)
        features = (extract_features(diff.object_patch, mask=diff.object_mask)
                    if diff.object_patch.shape[0] >= 16
                    and diff.object_patch.shape[1] >= 16
                    else perception.FeatureSet(np.zeros((0, 2)), np.zeros((0, 64))))

        c_pre, c_post = get_constraint(target.symbol, pose_pre, pose_post,
                                       self.world.landmarks)
        action = get_action(self.action_set, c_pre, c_post)

        context_pre = tuple(
            (o.id, o.symbol.attrs, eval_predicates(o.symbol, o.pose, self.world.landmarks))
            for o in self.world.objects if o.id != target.id)
        context_post = tuple(
            (o.id, o.symbol.attrs, eval_predicates(o.symbol, o.pose, new_world.landmarks))
            for o in new_world.objects if o.id != target.id)

        anchor_id = None
        anchor_offset = (0.0, 0.0)
        if self._dynamic_ids and self._label_sprites:
            from .world import detect_landmarks
            detected = [lm for lm in detect_landmarks(pre_raster, self._label_sprites)
                        if lm.id in self._dynamic_ids]
            near = _nearest_dynamic_landmark(detected, pose_post)
            if near is not None:
                cx, cy = near.center()
                anchor_id = near.id
                anchor_offset = (pose_post.x - cx, pose_post.y - cy)

        sy, sx = np.nonzero(diff.source_mask)
        object_size = int(max(sx.max() - sx.min() + 1, sy.max() - sy.min() + 1))
        rec = OpRecord(index=index, action=action, pre_obs=pre_obs,
                       post_obs=post_obs, pose_pre=pose_pre, pose_post=pose_post,
                       object_patch=diff.object_patch, object_mask=diff.object_mask,
                       source_mask=diff.source_mask, dest_mask=diff.dest_mask,
                       features=features, symbol=target.symbol,
                       c_pre=c_pre, c_post=c_post,
                       context_pre=context_pre, context_post=context_post,
                       anchor_landmark=anchor_id, anchor_offset=anchor_offset,
                       object_size=object_size)
        self.ops.append(rec)
        self.world = new_world
        return rec

    def finish(self) -> LearnedModel:
        return LearnedModel(ops=tuple(self.ops), frames=self.frames,
                            world_size=(self.world.width_px, self.world.height_px),
                            background_color=self.world.background_color,
                            label_sprites=dict(self._label_sprites))


def record_demonstration(world: World, script: DemoScript,
                         frames: FrameConfig | None = None,
                         action_set=DEFAULT_ACTIONS) -> LearnedModel:
    rec = DemonstrationRecorder(world, frames, action_set)
    for op in script:
        rec.apply(op)
    return rec.finish()


# --- reproduction -----------------------------------------------------------------

@dataclass
class ReproOptions:
    match_mode: str = "fixed"            # 'fixed' | 'adaptive' place matching
    margin: float = AMBIGUITY_MARGIN
    place_size: int | None = None        # fixed-mode template override
    seed: int = 0
    score_floor: float = NO_MATCH_FLOOR


@dataclass
class ExecutedOp:
    op_index: int
    action: str
    object_id: str | None
    pick: Pose2 | None
    place: Pose2 | None
    theta_pick: float
    theta_delta: float
    score_pre: float
    score_post: float
    error: str | None = None

    @property
    def success(self) -> bool:
        return self.error is None


def default_executor(world: World, action: str, pick: Pose2,
                     place: Pose2 | None, theta_delta: float):
    """Apply a reproduced operation to the simulated world.

    Returns (new_world, moved_object_id).  The object moves rigidly: the
    grasped point (pick) lands on the destination anchor (place) and the
    commanded rotation is applied about it, like a wrist rotation relative to
    the grasp.
    """
    obj = pick_object_at(world, pick.x, pick.y)
    if action in ("push", "pull"):
        return apply_operation(world, TutorOp(action, pick=pick)), obj.id
    dx = obj.pose.x - pick.x
    dy = obj.pose.y - pick.y
    c, s = math.cos(theta_delta), math.sin(theta_delta)
    target = Pose2(place.x + c * dx - s * dy,
                   place.y + s * dx + c * dy,
                   obj.pose.theta + theta_delta)
    new = apply_operation(world, TutorOp("pick-and-place", pick=pick, place=target))
    return new, obj.id


class ReproductionEngine:
    """Replays a learned model against the current world."""

    def __init__(self, world: World, model: LearnedModel,
                 mode: str = "sequential", executor=None,
                 options: ReproOptions | None = None):
        if mode not in ("sequential", "reactive"):
            raise ValueError(f"unknown mode {mode!r}")
        self.world = world
        self.model = model
        self.mode = mode
        self.executor = executor or default_executor
        self.options = options or ReproOptions()
        self.cursor = 0
        self.executed: set[int] = set()
        self.trace: list[ExecutedOp] = []

    # -- matching helpers ----------------------------------------------------

    def _scene(self):
        return perception.SceneCache(render(self.world))

    def _match_pick(self, scene, rec: OpRecord):
        size = self.model.pick_template_size()
        tpl, anchor, mask = _crop_record(rec.pre_obs, rec.pose_pre, size,
                                         rec.source_mask, invert=False)
        cands = find_match_candidates(
            scene.rgb, tpl, mask, anchor=anchor, scene=scene,
            template_features=rec.features if len(rec.features) >= 4 else None,
            seed=self.options.seed)
        if not cands or cands[0].score < self.options.score_floor:
            raise NoMatch(f"pick template for op {rec.index} not found")
        best = cands[0]
        return Pose2(best.x, best.y, best.theta), best.score

    def _match_place(self, scene, rec: OpRecord, force_fixed: bool = False):
        if rec.anchor_landmark and rec.anchor_landmark in self.model.label_sprites:
            sprite, alpha = self.model.label_sprites[rec.anchor_landmark]
            th, tw = alpha.shape
            hits = find_match_candidates(
                scene.rgb, sprite, alpha >= 128, scene=scene,
                anchor=(tw / 2.0, th / 2.0), seed=self.options.seed)
            if hits and hits[0].score >= 0.8:
                dest = Pose2(hits[0].x + rec.anchor_offset[0],
                             hits[0].y + rec.anchor_offset[1])
                score = self._verify_place(scene.rgb, rec, dest)
                if score >= self.options.score_floor:
                    return dest, score
        size = self.options.place_size or self.model.place_template_size()
        if self.options.match_mode == "adaptive" and not force_fixed:
            pose, score, _ = perception.find_best_match(
                scene.rgb, rec.post_obs, None, mode="adaptive",
                margin=self.options.margin,
                anchor=(rec.pose_post.x, rec.pose_post.y),
                mask=~rec.dest_mask, template_size=max(24, rec.object_size),
                seed=self.options.seed, scene=scene)
            return Pose2(pose.x, pose.y), score
        pose, score, _ = perception.find_best_match(
            scene.rgb, rec.post_obs, None, mode="fixed", margin=self.options.margin,
            anchor=(rec.pose_post.x, rec.pose_post.y),
            mask=~rec.dest_mask, template_size=size, seed=self.options.seed,
            scene=scene)
        return Pose2(pose.x, pose.y), score

    def _verify_place(self, raster, rec: OpRecord, dest: Pose2) -> float:
        size = self.options.place_size or self.model.place_template_size()
        tpl, anchor, mask = _crop_record(rec.post_obs, rec.pose_post, size,
                                         rec.dest_mask, invert=True)
        x0 = int(round(dest.x - anchor[0]))
        y0 = int(round(dest.y - anchor[1]))
        return perception.ncc_at(raster, tpl, mask, x0, y0)

    # -- stepping --------------------------------------------------------------

    def _execute(self, rec: OpRecord, pick: Pose2, place: Pose2 | None,
                 theta_pick: float, s_pre: float, s_post: float) -> ExecutedOp:
        theta_delta = normalize_angle(rec.pose_post.theta - theta_pick)
        self.world, oid = self.executor(self.world, rec.action, pick, place,
                                        theta_delta)
        done = ExecutedOp(op_index=rec.index, action=rec.action, object_id=oid,
                          pick=pick, place=place, theta_pick=theta_pick,
                          theta_delta=theta_delta, score_pre=s_pre,
                          score_post=s_post)
        self.executed.add(rec.index)
        self.trace.append(done)
        return done

    def step(self) -> ExecutedOp:
        """Sequential mode: reproduce the next demonstrated operation."""
        if self.mode != "sequential":
            raise VslError("step() is only valid in sequential mode")
        if self.cursor >= self.model.eta:
            raise VslError("demonstration fully reproduced")
        rec = self.model.ops[self.cursor]
        scene = self._scene()
        try:
            pick, s_pre = self._match_pick(scene, rec)
            if rec.action in ("push", "pull"):
                place, s_post = None, 1.0
            else:
                place, s_post = self._match_place(scene, rec)
        except (NoMatch, Ambiguous) as e:
            fail = ExecutedOp(op_index=rec.index, action=rec.action,
                              object_id=None, pick=None, place=None,
                              theta_pick=0.0, theta_delta=0.0,
                              score_pre=0.0, score_post=0.0,
                              error=f"{type(e).__name__}: {e}")
            self.trace.append(fail)
            raise MatchFailed(rec.index, f"{type(e).__name__}: {e}") from e
        self.cursor += 1
        return self._execute(rec, pick, place, pick.theta, s_pre, s_post)

    def intervene(self, op: TutorOp) -> ExecutedOp | None:
        """Tutor takes over: apply their operation to the live world.

        Sequentially this consumes the current step; reactively the change is
        the trigger, and the robot's response favors what just moved.
        """
        before = self.world
        self.world = apply_operation(self.world, op)
        if self.mode == "sequential":
            if self.cursor < self.model.eta:
                self.cursor += 1
            return None
        focus = None
        if op.place is not None:
            focus = (op.place.x, op.place.y)
        elif op.pick is not None:
            moved = pick_object_at(before, op.pick.x, op.pick.y)
            new = self.world.object_by_id(moved.id).pose
            focus = (new.x, new.y)
        return self.trigger(focus=focus)

    def trigger(self, focus=None) -> ExecutedOp | None:
        """Reactive mode: search all pre observations for the best match and
        execute only that operation; ties go to the lowest index.

        With a `focus` point (the location of a triggering world change),
        operations whose object is found at the change take priority over the
        rest, mirroring a tutor presenting one object at a time.
        """
        if self.mode != "reactive":
            raise VslError("trigger() is only valid in reactive mode")
        scene = self._scene()
        picks = []
        for rec in self.model.ops:
            if rec.index in self.executed:
                continue
            try:
                pick, s_pre = self._match_pick(scene, rec)
            except NoMatch:
                continue
            picks.append((s_pre, rec, pick))
        radius = 1.5 * self.model.biggest_object_size()
        groups = [picks]
        if focus is not None:
            near = [row for row in picks
                    if math.hypot(row[2].x - focus[0], row[2].y - focus[1])
                    <= radius]
            near_ids = {id(row) for row in near}
            far = [row for row in picks if id(row) not in near_ids]
            groups = [near, far]
        for group in groups:
            group.sort(key=lambda row: (-row[0], row[1].index))
            best = None
            for s_pre, rec, pick in group:
                if best is not None and s_pre <= best[0] + 1e-9:
                    break   # min(s_pre, s_post) cannot beat the leader now
                if rec.action in ("push", "pull"):
                    place, s_post = None, 1.0
                else:
                    try:
                        # Selection probes at the fixed frame: operations
                        # whose destination context is absent fail fast.
                        place, s_post = self._match_place(scene, rec,
                                                          force_fixed=True)
                    except (NoMatch, Ambiguous):
                        continue
                score = min(s_pre, s_post)
                if score < self.options.score_floor:
                    continue
                if best is None or score > best[0] + 1e-9:
                    best = (score, rec, pick, place, s_pre, s_post)
            if best is not None:
                _, rec, pick, place, s_pre, s_post = best
                return self._execute(rec, pick, place, pick.theta, s_pre,
                                     s_post)
        return None

    def run(self) -> list[ExecutedOp]:
        """Sequential full replay; halts on the first failed match."""
        while self.cursor < self.model.eta:
            self.step()
        return self.trace


def _crop_record(obs: Observation, anchor_world: Pose2, size: int,
                 mask_full: np.ndarray, invert: bool):
    """Template crop + local anchor + validity mask around a recorded pose."""
    size = int(min(size, obs.patch.shape[0], obs.patch.shape[1]))
    x0, y0 = obs.frame.top_left()
    ax = anchor_world.x - x0
    ay = anchor_world.y - y0
    cx0 = int(round(ax - size / 2.0))
    cy0 = int(round(ay - size / 2.0))
    cx0 = max(0, min(cx0, obs.patch.shape[1] - size))
    cy0 = max(0, min(cy0, obs.patch.shape[0] - size))
    tpl = obs.patch[cy0:cy0 + size, cx0:cx0 + size]
    m = mask_full[cy0:cy0 + size, cx0:cx0 + size]
    mask = ~m if invert else m
    return tpl, (ax - cx0, ay - cy0), mask


def reproduce(world: World, model: LearnedModel, mode: str = "sequential",
              executor=None, options: ReproOptions | None = None
              ) -> list[ExecutedOp]:
    """Sequential reproduction of every learned operation (see engine for
    reactive sessions, which are trigger-driven)."""
    engine = ReproductionEngine(world, model, mode=mode, executor=executor,
                                options=options)
    if mode == "sequential":
        return engine.run()
    raise VslError("reactive reproduction is trigger-driven; use ReproductionEngine")
