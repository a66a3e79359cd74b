"""Deterministic simulated tabletop: sprites on a raster, landmarks, operations.

A :class:`World` is an immutable snapshot.  Applying a tutor operation returns
a new world; rendering the same world twice yields byte-identical rasters.
"""

from __future__ import annotations

import base64
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import _raster
from .errors import AmbiguousPick, NoObjectAtPick, ParseError, ValidationError

DEFAULT_WIDTH = 1280
DEFAULT_HEIGHT = 960
DEFAULT_BACKGROUND = (205, 205, 205)

# Landmark ink: near-black, reserved so sprites never collide with it.
LANDMARK_COLOR = (10, 10, 10)
LANDMARK_GRAY_MAX = 60


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    t = math.fmod(theta, 2.0 * math.pi)
    if t <= -math.pi:
        t += 2.0 * math.pi
    elif t > math.pi:
        t -= 2.0 * math.pi
    return t


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class ObjectSymbol:
    name: str
    attrs: tuple[tuple[str, str], ...] = ()

    def attr(self, key: str) -> str | None:
        return dict(self.attrs).get(key)


@dataclass(frozen=True)
class SceneObject:
    id: str
    sprite: np.ndarray          # (h, w, 3) uint8
    alpha: np.ndarray           # (h, w) uint8
    pose: Pose2
    z_level: float = 0.0
    symbol: ObjectSymbol = ObjectSymbol("object")

    def __post_init__(self):
        if self.sprite.size == 0:
            raise ValidationError(f"object {self.id}: empty sprite")
        if self.alpha.shape != self.sprite.shape[:2]:
            raise ValidationError(f"object {self.id}: alpha/sprite dims differ")

    def rendered(self) -> tuple[np.ndarray, np.ndarray]:
        """Sprite rotated to the current pose."""
        return _raster.rotate_sprite(self.sprite, self.alpha, self.pose.theta)

    def contains(self, x: float, y: float) -> bool:
        """True when (x, y) falls on an opaque pixel of the posed sprite."""
        c, s = math.cos(self.pose.theta), math.sin(self.pose.theta)
        dx, dy = x - self.pose.x, y - self.pose.y
        h, w = self.alpha.shape
        sx = c * dx + s * dy + (w - 1) / 2.0
        sy = -s * dx + c * dy + (h - 1) / 2.0
        ix, iy = int(round(sx)), int(round(sy))
        if 0 <= ix < w and 0 <= iy < h:
            return self.alpha[iy, ix] >= 128
        return False

    def bbox_size(self) -> int:
        return max(self.alpha.shape)


@dataclass(frozen=True)
class Landmark:
    id: str
    kind: str                               # 'line' | 'label' | 'region'
    dynamic: bool = False
    # line geometry
    point: tuple[float, float] | None = None
    direction: tuple[float, float] | None = None
    extent: float = 0.0
    # label/region geometry
    rect: tuple[float, float, float, float] | None = None  # x, y, w, h
    sprite: np.ndarray | None = None
    sprite_alpha: np.ndarray | None = None
    predicate: str = ""
    color: tuple[int, int, int] = (120, 120, 120)

    def __post_init__(self):
        if self.kind == "line":
            if self.direction is None or math.hypot(*self.direction) == 0.0:
                raise ValidationError(f"landmark {self.id}: zero line direction")
        elif self.kind in ("label", "region"):
            if self.rect is None or self.rect[2] <= 0 or self.rect[3] <= 0:
                raise ValidationError(f"landmark {self.id}: degenerate rect")
        else:
            raise ValidationError(f"landmark {self.id}: unknown kind {self.kind!r}")

    def normal(self) -> tuple[float, float]:
        dx, dy = self.direction
        n = math.hypot(dx, dy)
        return (-dy / n, dx / n)

    def center(self) -> tuple[float, float]:
        if self.kind == "line":
            return self.point
        x, y, w, h = self.rect
        return (x + w / 2.0, y + h / 2.0)

    def translated(self, dx: float, dy: float) -> "Landmark":
        kw = {}
        if self.point is not None:
            kw["point"] = (self.point[0] + dx, self.point[1] + dy)
        if self.rect is not None:
            x, y, w, h = self.rect
            kw["rect"] = (x + dx, y + dy, w, h)
        return replace(self, **kw)


@dataclass(frozen=True)
class TutorOp:
    action: str = "pick-and-place"
    pick: Pose2 | None = None
    place: Pose2 | None = None


@dataclass(frozen=True)
class DemoScript:
    ops: tuple[TutorOp, ...] = ()

    def __len__(self):
        return len(self.ops)

    def __iter__(self):
        return iter(self.ops)


@dataclass(frozen=True)
class WorldConfig:
    allow_overlap: bool = False
    push_displacement: tuple[float, float] = (0.0, -90.0)
    reshuffle_rotation_deg: float = 0.0


@dataclass(frozen=True)
class World:
    width_px: int
    height_px: int
    objects: tuple[SceneObject, ...] = ()
    landmarks: tuple[Landmark, ...] = ()
    background: np.ndarray | None = None   # (H, W, 3) uint8; solid color if None
    background_color: tuple[int, int, int] = DEFAULT_BACKGROUND
    config: WorldConfig = field(default_factory=WorldConfig)

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValidationError("world dimensions must be positive")
        ids = [o.id for o in self.objects]
        if len(ids) != len(set(ids)):
            raise ValidationError("duplicate object ids")

    def object_by_id(self, oid: str) -> SceneObject:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)

    def with_objects(self, objects) -> "World":
        return replace(self, objects=tuple(objects))

    def with_landmarks(self, landmarks) -> "World":
        return replace(self, landmarks=tuple(landmarks))

    def biggest_object_size(self) -> int:
        return max((o.bbox_size() for o in self.objects), default=64)


# --- rendering --------------------------------------------------------------

def render(world: World) -> np.ndarray:
    """Composite background, landmarks, then objects in list order."""
    if world.background is not None:
        canvas = world.background.copy()
    else:
        canvas = np.empty((world.height_px, world.width_px, 3), dtype=np.uint8)
        canvas[...] = world.background_color
    for lm in world.landmarks:
        _render_landmark(canvas, lm)
    for obj in world.objects:
        rgb, a = obj.rendered()
        _raster.composite(canvas, rgb, a, obj.pose.x, obj.pose.y)
    return canvas


def _render_landmark(canvas: np.ndarray, lm: Landmark) -> None:
    if lm.kind == "line":
        dx, dy = lm.direction
        n = math.hypot(dx, dy)
        ux, uy = dx / n, dy / n
        half = lm.extent / 2.0
        p0 = (lm.point[0] - ux * half, lm.point[1] - uy * half)
        p1 = (lm.point[0] + ux * half, lm.point[1] + uy * half)
        _raster.draw_line(canvas, p0, p1, LANDMARK_COLOR, thickness=4)
    elif lm.kind == "label" and lm.sprite is not None:
        cx, cy = lm.center()
        _raster.composite(canvas, lm.sprite, lm.sprite_alpha, cx, cy)
    elif lm.kind == "region":
        x, y, w, h = lm.rect
        _raster.draw_rect_outline(canvas, x, y, w, h, lm.color, thickness=3)
        if lm.sprite is not None:
            # Identity tag centered along the region's top edge, so any
            # in-region destination keeps it inside its context frame.
            sh, sw = lm.sprite_alpha.shape
            _raster.composite(canvas, lm.sprite, lm.sprite_alpha,
                              x + w / 2.0, y + sh / 2.0 + 5)


# --- operations -------------------------------------------------------------

def pick_object_at(world: World, x: float, y: float) -> SceneObject:
    """Object whose footprint contains (x, y); topmost wins under overlap."""
    hits = [o for o in world.objects if o.contains(x, y)]
    if not hits:
        raise NoObjectAtPick(f"no object footprint contains ({x:.1f}, {y:.1f})")
    if len(hits) > 1 and not world.config.allow_overlap:
        raise AmbiguousPick(
            f"{len(hits)} footprints contain ({x:.1f}, {y:.1f}): "
            + ", ".join(o.id for o in hits))
    return hits[-1]  # render order: last drawn is on top


def apply_operation(world: World, op: TutorOp) -> World:
    """Apply one tutor operation, returning the successor world."""
    if op.pick is None:
        raise NoObjectAtPick("operation has no pick location")
    target = pick_object_at(world, op.pick.x, op.pick.y)
    if op.action in ("push", "pull"):
        ddx, ddy = world.config.push_displacement
        sign = 1.0 if op.action == "push" else -1.0
        new_pose = Pose2(target.pose.x + sign * ddx,
                         target.pose.y + sign * ddy,
                         target.pose.theta)
    else:
        if op.place is None:
            raise ValidationError(f"{op.action} op needs a place pose")
        new_pose = op.place
    new_objects = [replace(o, pose=new_pose) if o.id == target.id else o
                   for o in world.objects]
    return world.with_objects(new_objects)


def add_object(world: World, obj: SceneObject) -> World:
    return world.with_objects(list(world.objects) + [obj])


def remove_objects(world: World, ids) -> World:
    ids = set(ids)
    return world.with_objects([o for o in world.objects if o.id not in ids])


def check_no_overlap(world: World) -> None:
    """Raise ValidationError when two opaque footprints intersect."""
    stamps = []
    for o in world.objects:
        rgb, a = o.rendered()
        h, w = a.shape
        x0 = int(round(o.pose.x - (w - 1) / 2.0))
        y0 = int(round(o.pose.y - (h - 1) / 2.0))
        stamps.append((o.id, x0, y0, a >= 128))
    for i in range(len(stamps)):
        for j in range(i + 1, len(stamps)):
            if _masks_intersect(stamps[i], stamps[j]):
                raise ValidationError(
                    f"objects {stamps[i][0]} and {stamps[j][0]} overlap")


def _masks_intersect(a, b) -> bool:
    _, ax, ay, am = a
    _, bx, by, bm = b
    x0 = max(ax, bx)
    y0 = max(ay, by)
    x1 = min(ax + am.shape[1], bx + bm.shape[1])
    y1 = min(ay + am.shape[0], by + bm.shape[0])
    if x0 >= x1 or y0 >= y1:
        return False
    asub = am[y0 - ay:y1 - ay, x0 - ax:x1 - ax]
    bsub = bm[y0 - by:y1 - by, x0 - bx:x1 - bx]
    return bool(np.any(asub & bsub))


# --- landmark detection -----------------------------------------------------

def detect_landmarks(raster: np.ndarray, label_sprites: dict | None = None,
                     min_line_pixels: int = 60) -> list[Landmark]:
    """Find line landmarks by color-mask thresholding + least-squares fit,
    and label landmarks by normalized correlation against registered sprites.
    """
    from scipy import ndimage

    found: list[Landmark] = []
    dark = np.all(raster <= LANDMARK_GRAY_MAX, axis=2)
    labels, count = ndimage.label(dark)
    lines = []
    for idx in range(1, count + 1):
        ys, xs = np.nonzero(labels == idx)
        if xs.size < min_line_pixels:
            continue
        cx, cy = float(xs.mean()), float(ys.mean())
        pts = np.stack([xs - cx, ys - cy], axis=1).astype(np.float64)
        cov = pts.T @ pts / pts.shape[0]
        evals, evecs = np.linalg.eigh(cov)
        if evals[1] < 4.0 * max(evals[0], 1e-9):
            continue  # blob, not a line
        d = evecs[:, 1]
        proj = pts @ d
        extent = float(proj.max() - proj.min())
        lines.append(Landmark(id="", kind="line", point=(cx, cy),
                              direction=(float(d[0]), float(d[1])),
                              extent=extent))
    lines.sort(key=lambda l: (l.point[1], l.point[0]))
    for i, lm in enumerate(lines):
        found.append(replace(lm, id=f"line{i}"))

    if label_sprites:
        from .perception import masked_ncc_map  # local import: avoid cycle
        gray = _raster.to_gray(raster)
        for name in sorted(label_sprites):
            sprite, alpha = label_sprites[name]
            tgray = _raster.to_gray(sprite)
            mask = (alpha >= 128).astype(np.float64)
            if mask.sum() < 16:
                continue
            ncc = masked_ncc_map(gray, tgray, mask)
            peak = np.unravel_index(int(np.argmax(ncc)), ncc.shape)
            if ncc[peak] >= 0.9:
                th, tw = tgray.shape
                found.append(Landmark(id=name, kind="label",
                                      rect=(float(peak[1]), float(peak[0]),
                                            float(tw), float(th))))
    return found


# --- scenario I/O ------------------------------------------------------------

def _sprite_from_spec(entry: str | dict, base_dir: str) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(entry, str):
        if entry.startswith("base64:"):
            return _raster.decode_png(base64.b64decode(entry[len("base64:"):]))
        path = entry if os.path.isabs(entry) else os.path.join(base_dir, entry)
        if not os.path.exists(path):
            raise ParseError(f"sprite file not found: {entry}", field="sprite")
        with open(path, "rb") as f:
            return _raster.decode_png(f.read())
    raise ParseError("sprite must be a png path or base64 string", field="sprite")


def sprite_to_spec(rgb: np.ndarray, alpha: np.ndarray) -> str:
    return "base64:" + base64.b64encode(_raster.encode_png(rgb, alpha)).decode("ascii")


def _pose_from_list(vals, what: str) -> Pose2:
    if not isinstance(vals, (list, tuple)) or len(vals) not in (2, 3):
        raise ParseError(f"{what} must be [x, y] or [x, y, theta_deg]", field=what)
    theta = math.radians(vals[2]) if len(vals) == 3 else 0.0
    return Pose2(float(vals[0]), float(vals[1]), theta)


def load_scenario(path: str) -> tuple[World, DemoScript]:
    """Load a scenario JSON file; see README for the schema."""
    if not os.path.exists(path):
        raise ParseError(f"scenario not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON at line {e.lineno}: {e.msg}") from e
    return scenario_from_dict(doc, base_dir=os.path.dirname(os.path.abspath(path)))


def scenario_from_dict(doc: dict, base_dir: str = ".") -> tuple[World, DemoScript]:
    wspec = doc.get("world", {})
    width = int(wspec.get("width", DEFAULT_WIDTH))
    height = int(wspec.get("height", DEFAULT_HEIGHT))
    bg = wspec.get("background", list(DEFAULT_BACKGROUND))
    background = None
    bg_color = DEFAULT_BACKGROUND
    if isinstance(bg, list) and len(bg) == 3:
        bg_color = tuple(int(v) for v in bg)
    elif isinstance(bg, str):
        rgb, _ = _sprite_from_spec(bg, base_dir)
        if rgb.shape[:2] != (height, width):
            raise ParseError("background dims do not match world", field="background")
        background = rgb
    else:
        raise ParseError("background must be [r,g,b] or a png ref", field="background")

    cfg_spec = doc.get("config", {})
    config = WorldConfig(
        allow_overlap=bool(cfg_spec.get("allow_overlap", False)),
        push_displacement=tuple(cfg_spec.get("push_displacement", (0.0, -90.0))),
        reshuffle_rotation_deg=float(cfg_spec.get("reshuffle_rotation_deg", 0.0)),
    )

    objects = []
    seen = set()
    for ospec in doc.get("objects", []):
        oid = ospec.get("id")
        if not oid:
            raise ParseError("object without id", field="objects")
        if oid in seen:
            raise ParseError(f"duplicate object id {oid!r}", field="objects")
        seen.add(oid)
        rgb, alpha = _sprite_from_spec(ospec.get("sprite"), base_dir)
        attrs = tuple(sorted((str(k), str(v))
                             for k, v in ospec.get("attrs", {}).items()))
        objects.append(SceneObject(
            id=oid, sprite=rgb, alpha=alpha,
            pose=_pose_from_list(ospec.get("pose", [0, 0]), "pose"),
            z_level=float(ospec.get("z_level", 0.0)),
            symbol=ObjectSymbol(name=oid, attrs=attrs)))

    landmarks = []
    for lspec in doc.get("landmarks", []):
        kind = lspec.get("kind")
        kw = dict(id=lspec.get("id", f"lm{len(landmarks)}"), kind=kind,
                  dynamic=bool(lspec.get("dynamic", False)),
                  predicate=lspec.get("predicate", ""))
        if kind == "line":
            geo = lspec.get("line", {})
            kw.update(point=tuple(geo.get("point", (0, 0))),
                      direction=tuple(geo.get("direction", (1, 0))),
                      extent=float(geo.get("extent", 100.0)))
        else:
            kw["rect"] = tuple(lspec.get("rect", (0, 0, 0, 0)))
            if "color" in lspec:
                kw["color"] = tuple(int(v) for v in lspec["color"])
            if "sprite" in lspec:
                rgb, alpha = _sprite_from_spec(lspec["sprite"], base_dir)
                kw.update(sprite=rgb, sprite_alpha=alpha)
        landmarks.append(Landmark(**kw))

    ops = []
    for sspec in doc.get("script", []):
        pick = _pose_from_list(sspec["pick"], "pick") if "pick" in sspec else None
        place = _pose_from_list(sspec["place"], "place") if "place" in sspec else None
        ops.append(TutorOp(action=sspec.get("action", "pick-and-place"),
                           pick=pick, place=place))

    world = World(width_px=width, height_px=height, objects=tuple(objects),
                  landmarks=tuple(landmarks), background=background,
                  background_color=bg_color, config=config)
    if not config.allow_overlap:
        check_no_overlap(world)
    return world, DemoScript(tuple(ops))


def scenario_to_dict(world: World, script: DemoScript) -> dict:
    """Serialize back to the scenario schema (sprites inlined as base64)."""
    doc: dict = {
        "world": {"width": world.width_px, "height": world.height_px,
                  "background": list(world.background_color)},
        "objects": [], "landmarks": [], "script": [],
        "config": {"allow_overlap": world.config.allow_overlap,
                   "push_displacement": list(world.config.push_displacement),
                   "reshuffle_rotation_deg": world.config.reshuffle_rotation_deg},
    }
    for o in world.objects:
        doc["objects"].append({
            "id": o.id,
            "sprite": sprite_to_spec(o.sprite, o.alpha),
            "pose": [o.pose.x, o.pose.y, math.degrees(o.pose.theta)],
            "z_level": o.z_level,
            "attrs": dict(o.symbol.attrs),
        })
    for lm in world.landmarks:
        entry: dict = {"id": lm.id, "kind": lm.kind, "dynamic": lm.dynamic}
        if lm.predicate:
            entry["predicate"] = lm.predicate
        if lm.kind == "line":
            entry["line"] = {"point": list(lm.point),
                             "direction": list(lm.direction),
                             "extent": lm.extent}
        else:
            entry["rect"] = list(lm.rect)
            entry["color"] = list(lm.color)
            if lm.sprite is not None:
                entry["sprite"] = sprite_to_spec(lm.sprite, lm.sprite_alpha)
        doc["landmarks"].append(entry)
    for op in script:
        entry = {"action": op.action}
        if op.pick is not None:
            entry["pick"] = [op.pick.x, op.pick.y]
        if op.place is not None:
            entry["place"] = [op.place.x, op.place.y, math.degrees(op.place.theta)]
        doc["script"].append(entry)
    return doc


def save_scenario(path: str, world: World, script: DemoScript) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scenario_to_dict(world, script), f, indent=1, sort_keys=True)
