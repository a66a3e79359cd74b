"""Bundled scenario fixtures: procedurally generated sprites and task worlds.

Every fixture is deterministic.  Sprites are seeded block patterns with enough
texture for corner features; colors stay above the landmark-ink threshold so
line detection never confuses an object with a drawn landmark.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError
from .world import (DemoScript, Landmark, ObjectSymbol, Pose2, SceneObject,
                    TutorOp, World, WorldConfig, apply_operation, load_scenario,
                    save_scenario, scenario_to_dict)

EVAL_W, EVAL_H = 512, 384


# --- procedural sprites -------------------------------------------------------

def _block_pattern(size_y: int, size_x: int, base, seed: int, cells: int = 6,
                   vmin: int = 72, vmax: int = 245) -> np.ndarray:
    rng = np.random.default_rng(seed)
    factors = rng.uniform(0.5, 1.4, size=(cells, cells, 3))
    block = np.clip(np.asarray(base, dtype=np.float64) * factors, vmin, vmax)
    ky = -(-size_y // cells)
    kx = -(-size_x // cells)
    img = np.kron(block, np.ones((ky, kx, 1)))[:size_y, :size_x]
    return img.astype(np.uint8)


def _bordered(img: np.ndarray, base, vmin: int = 72) -> np.ndarray:
    edge = np.clip(np.asarray(base, dtype=np.float64) * 0.45, vmin, 255).astype(np.uint8)
    img = img.copy()
    img[:2, :] = edge
    img[-2:, :] = edge
    img[:, :2] = edge
    img[:, -2:] = edge
    return img


def make_square_sprite(size: int, base, seed: int):
    rgb = _bordered(_block_pattern(size, size, base, seed), base)
    alpha = np.full((size, size), 255, dtype=np.uint8)
    return rgb, alpha


def make_circle_sprite(size: int, base, seed: int, rim=None):
    rgb = _block_pattern(size, size, base, seed)
    yy, xx = np.mgrid[0:size, 0:size]
    r = (size - 1) / 2.0
    dist = np.hypot(xx - r, yy - r)
    alpha = np.where(dist <= r, 255, 0).astype(np.uint8)
    ring = (dist <= r) & (dist >= r - 3)
    rgb[ring] = np.clip(np.asarray(rim if rim is not None else base) * 0.5,
                        72, 255).astype(np.uint8)
    return rgb, alpha


def make_triangle_sprite(size: int, base, seed: int):
    rgb = _block_pattern(size, size, base, seed)
    yy, xx = np.mgrid[0:size, 0:size]
    half = (size - 1) / 2.0
    inside = (yy >= 2) & (np.abs(xx - half) <= (yy * half / (size - 1)))
    alpha = np.where(inside, 255, 0).astype(np.uint8)
    return rgb, alpha


def make_tile_sprite(w: int, h: int, base_left, base_right, seed: int):
    left = _block_pattern(h, w // 2, base_left, seed, cells=4)
    right = _block_pattern(h, w - w // 2, base_right, seed + 1, cells=4)
    rgb = _bordered(np.concatenate([left, right], axis=1), base_left)
    rgb[:, w // 2 - 1:w // 2 + 1] = (80, 80, 80)
    alpha = np.full((h, w), 255, dtype=np.uint8)
    return rgb, alpha


def make_label_sprite(size: int, base, seed: int, shape: str = "disc"):
    rgb = _block_pattern(size, size, base, seed, cells=4)
    yy, xx = np.mgrid[0:size, 0:size]
    r = (size - 1) / 2.0
    if shape == "disc":
        inside = np.hypot(xx - r, yy - r) <= r
    elif shape == "diamond":
        inside = (np.abs(xx - r) + np.abs(yy - r)) <= r
    elif shape == "ring":
        d = np.hypot(xx - r, yy - r)
        inside = (d <= r) & (d >= r * 0.45)
    else:  # cross
        inside = (np.abs(xx - r) <= r * 0.3) | (np.abs(yy - r) <= r * 0.3)
    alpha = np.where(inside, 255, 0).astype(np.uint8)
    return rgb, alpha


def _obj(oid: str, sprite, pose, attrs=(), z=0.0) -> SceneObject:
    rgb, alpha = sprite
    return SceneObject(id=oid, sprite=rgb, alpha=alpha, pose=pose, z_level=z,
                       symbol=ObjectSymbol(name=oid, attrs=tuple(sorted(attrs))))


# --- fixtures -------------------------------------------------------------------

@dataclass
class ScenarioFixture:
    name: str
    world: World
    script: DemoScript
    kind: str = "sequential"            # sequential | classification | domino
    reshuffle_area: tuple = (40, 40, 472, 344)      # x0, y0, x1, y1 for centers
    frozen_objects: frozenset = frozenset()
    landmark_move: dict = field(default_factory=dict)  # lm id -> center box
    place_match_mode: str = "fixed"

    def goal_poses(self) -> dict[str, Pose2]:
        """Final pose per moved object from an exact script replay."""
        w = self.world
        for op in self.script:
            w = apply_operation(w, op)
        moved = {oid for oid, _ in self.op_targets()}
        return {o.id: o.pose for o in w.objects if o.id in moved}

    def op_targets(self) -> list[tuple[str, Pose2]]:
        """(object id, destination pose) per op from an exact replay."""
        from .world import pick_object_at
        w = self.world
        out = []
        for op in self.script:
            target = pick_object_at(w, op.pick.x, op.pick.y)
            w = apply_operation(w, op)
            out.append((target.id, w.object_by_id(target.id).pose))
        return out


def alphabet() -> ScenarioFixture:
    colors = {"A": (210, 120, 110), "B": (120, 200, 120),
              "C": (120, 140, 220), "D": (220, 200, 110)}
    starts = {"A": (100, 80), "B": (210, 70), "C": (330, 84), "D": (430, 96)}
    objects = [
        _obj(letter, make_square_sprite(48, colors[letter], seed=11 + i),
             Pose2(*starts[letter]), attrs=(("letter", letter),))
        for i, letter in enumerate("ABCD")]
    baseline = Landmark(id="baseline", kind="line", point=(210.0, 300.0),
                        direction=(-1.0, 0.0), extent=300.0, predicate="above")
    places = {"A": (96, 276, 0.0), "B": (156, 276, 0.0),
              "C": (216, 276, 0.0), "D": (276, 276, 20.0)}
    ops = [TutorOp(pick=Pose2(*starts[le]),
                   place=Pose2(places[le][0], places[le][1],
                               math.radians(places[le][2])))
           for le in "ABCD"]
    world = World(EVAL_W, EVAL_H, objects=tuple(objects), landmarks=(baseline,))
    return ScenarioFixture(name="alphabet", world=world, script=DemoScript(tuple(ops)),
                           reshuffle_area=(44, 44, 468, 180))


def animal_puzzle() -> ScenarioFixture:
    pond = Landmark(id="pond", kind="label", dynamic=True,
                    rect=(82.0, 92.0, 56.0, 56.0),
                    sprite=make_label_sprite(56, (110, 160, 230), 31, "disc")[0],
                    sprite_alpha=make_label_sprite(56, (110, 160, 230), 31, "disc")[1])
    tree = Landmark(id="tree", kind="label", dynamic=True,
                    rect=(352.0, 87.0, 56.0, 56.0),
                    sprite=make_label_sprite(56, (120, 190, 120), 32, "diamond")[0],
                    sprite_alpha=make_label_sprite(56, (120, 190, 120), 32, "diamond")[1])
    starts = {"frog_body": (80, 310), "frog_head": (190, 320),
              "giraffe_body": (300, 305), "giraffe_head": (420, 315)}
    colors = {"frog_body": (110, 190, 130), "frog_head": (150, 210, 120),
              "giraffe_body": (220, 180, 110), "giraffe_head": (230, 200, 140)}
    objects = [_obj(name, make_square_sprite(44, colors[name], seed=41 + i),
                    Pose2(*starts[name]), attrs=(("animal", name.split("_")[0]),))
               for i, name in enumerate(starts)]
    places = {"frog_body": (110, 198), "frog_head": (158, 198),
              "giraffe_body": (380, 193), "giraffe_head": (428, 193)}
    ops = [TutorOp(pick=Pose2(*starts[n]), place=Pose2(*places[n]))
           for n in ["frog_body", "frog_head", "giraffe_body", "giraffe_head"]]
    world = World(EVAL_W, EVAL_H, objects=tuple(objects), landmarks=(pond, tree))
    return ScenarioFixture(
        name="animal_puzzle", world=world, script=DemoScript(tuple(ops)),
        reshuffle_area=(44, 272, 468, 340),
        landmark_move={"pond": (86, 190, 96, 146), "tree": (330, 420, 92, 142)})


def _region(lm_id, cx, cy, w, h, tag_color, tag_seed, tag_shape):
    sprite, alpha = make_label_sprite(24, tag_color, tag_seed, tag_shape)
    return Landmark(id=lm_id, kind="region",
                    rect=(cx - w / 2.0, cy - h / 2.0, float(w), float(h)),
                    sprite=sprite, sprite_alpha=alpha,
                    color=tuple(int(v * 0.6) for v in tag_color))


def hanoi() -> ScenarioFixture:
    bases = (
        _region("base1", 100, 280, 96, 72, (220, 150, 150), 51, "disc"),
        _region("base2", 256, 280, 96, 72, (150, 220, 150), 52, "diamond"),
        _region("base3", 412, 280, 96, 72, (150, 150, 220), 53, "cross"),
    )
    big = _obj("disk_big", make_circle_sprite(64, (190, 160, 220), 61, rim=(140, 90, 200)),
               Pose2(100, 280), attrs=(("size", "big"),))
    small = _obj("disk_small", make_circle_sprite(44, (230, 170, 120), 62, rim=(200, 120, 80)),
                 Pose2(100, 280), attrs=(("size", "small"),))
    ops = [
        TutorOp(pick=Pose2(100, 280), place=Pose2(412, 280)),   # small -> base3
        TutorOp(pick=Pose2(100, 280), place=Pose2(256, 280)),   # big -> base2
        TutorOp(pick=Pose2(412, 280), place=Pose2(256, 280)),   # small -> base2
    ]
    world = World(EVAL_W, EVAL_H, objects=(big, small), landmarks=bases,
                  config=WorldConfig(allow_overlap=True))
    return ScenarioFixture(name="hanoi", world=world, script=DemoScript(tuple(ops)),
                           reshuffle_area=(48, 60, 464, 156))


def classification() -> ScenarioFixture:
    bins = (
        _region("animals", 128, 96, 170, 90, (210, 170, 120), 71, "ring"),
        _region("machines", 384, 96, 170, 90, (140, 170, 220), 72, "cross"),
    )
    spec = {
        "cat": ((208, 170, 140), (90, 300), (86, 100), "animal"),
        "dog": ((180, 150, 120), (200, 310), (166, 100), "animal"),
        "car": ((150, 170, 230), (310, 300), (342, 100), "machine"),
        "truck": ((130, 190, 210), (420, 310), (422, 100), "machine"),
    }
    objects = [_obj(n, make_square_sprite(44, c, seed=81 + i), Pose2(*s),
                    attrs=(("class", k),))
               for i, (n, (c, s, _p, k)) in enumerate(spec.items())]
    ops = [TutorOp(pick=Pose2(*spec[n][1]), place=Pose2(*spec[n][2]))
           for n in ["cat", "car", "dog", "truck"]]
    world = World(EVAL_W, EVAL_H, objects=tuple(objects), landmarks=bins)
    return ScenarioFixture(name="classification", world=world,
                           script=DemoScript(tuple(ops)), kind="classification",
                           reshuffle_area=(48, 252, 464, 340))


def domino() -> ScenarioFixture:
    pair_colors = [((220, 140, 120), (120, 200, 160)),
                   ((140, 160, 230), (230, 210, 120)),
                   ((190, 130, 200), (130, 210, 210))]
    chain_y = 120
    chain_x = {"a1": 120, "b1": 176, "a2": 272, "b2": 328, "a3": 424, "b3": 480}
    starts = {"a1": (70, 280), "b1": (150, 290), "a2": (230, 280),
              "b2": (310, 290), "a3": (390, 280), "b3": (470, 290)}
    objects = []
    for k in range(3):
        cl, cr = pair_colors[k]
        objects.append(_obj(f"a{k + 1}", make_tile_sprite(52, 36, cl, cr, 91 + 10 * k),
                            Pose2(*starts[f"a{k + 1}"]), attrs=(("pair", str(k + 1)),)))
        objects.append(_obj(f"b{k + 1}", make_tile_sprite(52, 36, cr, cl, 95 + 10 * k),
                            Pose2(*starts[f"b{k + 1}"]), attrs=(("pair", str(k + 1)),)))
    ops = [TutorOp(pick=Pose2(*starts[n]), place=Pose2(chain_x[n], chain_y))
           for n in ["a1", "b1", "a2", "b2", "a3", "b3"]]
    world = World(EVAL_W, EVAL_H, objects=tuple(objects), landmarks=())
    return ScenarioFixture(name="domino", world=world, script=DemoScript(tuple(ops)),
                           kind="domino", reshuffle_area=(44, 200, 468, 344),
                           place_match_mode="adaptive")


def roof() -> ScenarioFixture:
    body_sprite = make_square_sprite(72, (130, 150, 220), seed=101)
    roof_sprite = make_triangle_sprite(48, (190, 130, 90), seed=102)
    bodies = [_obj(f"body{i + 1}", body_sprite, Pose2(x, 170))
              for i, x in enumerate((128, 256, 384))]
    roofs = [_obj(f"roof{i + 1}", roof_sprite, Pose2(x, y))
             for i, (x, y) in enumerate(((110, 400), (256, 404), (400, 400)))]
    ops = [
        TutorOp(pick=Pose2(110, 400), place=Pose2(128, 112)),
        TutorOp(pick=Pose2(256, 404), place=Pose2(256, 112)),
        TutorOp(pick=Pose2(400, 400), place=Pose2(384, 222)),   # below the bare house
    ]
    world = World(EVAL_W, 448, objects=tuple(bodies + roofs), landmarks=())
    return ScenarioFixture(name="roof", world=world, script=DemoScript(tuple(ops)),
                           reshuffle_area=(64, 370, 448, 430),
                           frozen_objects=frozenset({"body1", "body2", "body3"}),
                           place_match_mode="adaptive")


def pushpull(initial: str = "near", sides: dict | None = None) -> ScenarioFixture:
    """Borderline world for push/pull grounding.

    `initial` picks the common side; `sides` overrides it per object id,
    e.g. {"Bgreen": "far", "Borange": "near"}.
    """
    sides = sides or {}

    def y_of(oid):
        return 96 if sides.get(oid, initial) == "far" else 240

    border = Landmark(id="border", kind="line", point=(224.0, 168.0),
                      direction=(-1.0, 0.0), extent=380.0, predicate="far")
    green = _obj("Bgreen", make_square_sprite(44, (120, 210, 120), 111),
                 Pose2(140, y_of("Bgreen")), attrs=(("color", "green"),))
    orange = _obj("Borange", make_square_sprite(44, (235, 160, 90), 112),
                  Pose2(300, y_of("Borange")), attrs=(("color", "orange"),))
    world = World(448, 336, objects=(green, orange), landmarks=(border,),
                  config=WorldConfig(push_displacement=(0.0, -110.0)))
    return ScenarioFixture(name="pushpull", world=world, script=DemoScript(()),
                           reshuffle_area=(48, 200, 400, 300))


BUILTIN = {
    "alphabet": alphabet,
    "animal_puzzle": animal_puzzle,
    "hanoi": hanoi,
    "classification": classification,
    "domino": domino,
    "roof": roof,
    "pushpull": pushpull,
}

EVAL_FIXTURES = ("alphabet", "animal_puzzle", "hanoi", "classification", "domino")


def builtin(name: str) -> ScenarioFixture:
    if name not in BUILTIN:
        raise ParseError(f"unknown builtin scenario {name!r}; "
                         f"choose from {sorted(BUILTIN)}")
    return BUILTIN[name]()


def fixture_to_dict(fx: ScenarioFixture) -> dict:
    doc = scenario_to_dict(fx.world, fx.script)
    doc["config"].update({
        "kind": fx.kind,
        "reshuffle_area": list(fx.reshuffle_area),
        "frozen_objects": sorted(fx.frozen_objects),
        "landmark_move": {k: list(v) for k, v in fx.landmark_move.items()},
        "place_match_mode": fx.place_match_mode,
    })
    return doc


def save_fixture(path: str, fx: ScenarioFixture) -> None:
    import json
    with open(path, "w", encoding="utf-8") as f:
        json.dump(fixture_to_dict(fx), f, indent=1, sort_keys=True)


def load_fixture(path_or_name: str) -> ScenarioFixture:
    """Accepts a scenario file path or a builtin fixture name."""
    import json
    import os
    if not os.path.exists(path_or_name) and path_or_name in BUILTIN:
        return builtin(path_or_name)
    world, script = load_scenario(path_or_name)
    with open(path_or_name, "r", encoding="utf-8") as f:
        cfg = json.load(f).get("config", {})
    return ScenarioFixture(
        name=os.path.splitext(os.path.basename(path_or_name))[0],
        world=world, script=script,
        kind=cfg.get("kind", "sequential"),
        reshuffle_area=tuple(cfg.get("reshuffle_area", (40, 40, world.width_px - 40,
                                                        world.height_px - 40))),
        frozen_objects=frozenset(cfg.get("frozen_objects", ())),
        landmark_move={k: tuple(v) for k, v in cfg.get("landmark_move", {}).items()},
        place_match_mode=cfg.get("place_match_mode", "fixed"))


# --- reshuffling -----------------------------------------------------------------

def _fixture_rng(name: str, seed: int) -> np.random.Generator:
    return np.random.default_rng([seed & 0x7FFFFFFF] + [ord(c) for c in name])


def _band(lo: float, hi: float, half: float) -> tuple[int, int]:
    """Integer sampling range for a center constrained to [lo+half, hi-half];
    collapses to the band midpoint when the band is thinner than the object."""
    a, b = lo + half, hi - half
    if b < a:
        mid = int(round((lo + hi) / 2.0))
        return (mid, mid + 1)
    return (int(a), int(b) + 1)


def reshuffle(fx: ScenarioFixture, seed: int,
              exclude: frozenset = frozenset()
              ) -> tuple[World, dict[str, tuple[float, float]]]:
    """Seeded random rearrangement of the movable objects (and dynamic
    landmarks) of a fixture; returns the new world and landmark offsets."""
    rng = _fixture_rng(fx.name, seed)
    world = fx.world
    offsets: dict[str, tuple[float, float]] = {}
    landmarks = []
    for lm in world.landmarks:
        if lm.dynamic and lm.id in fx.landmark_move:
            x0, x1, y0, y1 = fx.landmark_move[lm.id]
            cx = float(rng.integers(int(x0), int(x1) + 1))
            cy = float(rng.integers(int(y0), int(y1) + 1))
            ox, oy = lm.center()
            offsets[lm.id] = (cx - ox, cy - oy)
            landmarks.append(lm.translated(cx - ox, cy - oy))
        else:
            landmarks.append(lm)

    x0, y0, x1, y1 = fx.reshuffle_area
    rot = math.radians(world.config.reshuffle_rotation_deg)
    placed: list[tuple[float, float, float]] = []   # x, y, radius
    for o in world.objects:
        if o.id in fx.frozen_objects or o.id in exclude:
            placed.append((o.pose.x, o.pose.y, o.bbox_size() / 2.0))
    new_objects = []
    for o in world.objects:
        if o.id in fx.frozen_objects or o.id in exclude:
            new_objects.append(o)
            continue
        half = o.bbox_size() / 2.0 * (1.5 if rot else 1.0)
        for _ in range(2000):
            px = float(rng.integers(*_band(x0, x1, half)))
            py = float(rng.integers(*_band(y0, y1, half)))
            if all((px - qx) ** 2 + (py - qy) ** 2 >= (half + qr + 8) ** 2
                   for qx, qy, qr in placed):
                break
        else:
            raise ParseError(f"could not reshuffle {o.id} into free space")
        theta = float(rng.uniform(-rot, rot)) if rot else 0.0
        placed.append((px, py, half))
        from dataclasses import replace as _rp
        new_objects.append(_rp(o, pose=Pose2(px, py, theta)))
    return (world.with_objects(new_objects).with_landmarks(landmarks), offsets)


def free_pose(fx: ScenarioFixture, world: World, rng: np.random.Generator,
              half: float) -> Pose2:
    """A collision-free pose inside the fixture's staging area."""
    x0, y0, x1, y1 = fx.reshuffle_area
    occupied = [(o.pose.x, o.pose.y, o.bbox_size() / 2.0) for o in world.objects]
    for _ in range(400):
        px = float(rng.integers(int(x0 + half), int(max(x1 - half, x0 + half)) + 1))
        py = float(rng.integers(int(y0 + half), int(max(y1 - half, y0 + half)) + 1))
        if all((px - qx) ** 2 + (py - qy) ** 2 >= (half + qr + 10) ** 2
               for qx, qy, qr in occupied):
            return Pose2(px, py)
    raise ParseError("no free pose available in staging area")
