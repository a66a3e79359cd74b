"""Observation-log persistence: a learned model as a directory of PNG patches
plus manifest.json (frames, poses) and model.json (policy, constraints).

Serialization is canonical (sorted keys, fixed float rounding, deterministic
PNG encoding) so identical recordings produce byte-identical directories.
"""

from __future__ import annotations

import json
import os

import numpy as np

from . import core, perception
from ._raster import decode_png, encode_png
from .core import FrameConfig, LearnedModel, OpRecord, Predicate
from .perception import Frame, Observation
from .world import Pose2


def _r(v: float) -> float:
    return round(float(v), 4)


def _pose_to_json(p: Pose2) -> dict:
    return {"x": _r(p.x), "y": _r(p.y), "theta": round(float(p.theta), 6)}


def _pose_from_json(d: dict) -> Pose2:
    return Pose2(d["x"], d["y"], d["theta"])


def _frame_to_json(f: Frame) -> dict:
    return {"cx": _r(f.center[0]), "cy": _r(f.center[1]),
            "width": f.width, "height": f.height}


def _frame_from_json(d: dict) -> Frame:
    return Frame(center=(d["cx"], d["cy"]), width=d["width"], height=d["height"])


def _preds_to_json(ps) -> list:
    return [{"name": p.name, "args": list(p.args), "value": p.value}
            for p in sorted(ps, key=lambda p: (p.name, p.args))]


def _preds_from_json(rows) -> frozenset:
    return frozenset(Predicate(r["name"], tuple(r["args"]), r["value"])
                     for r in rows)


def _write_png(path: str, rgb: np.ndarray, alpha: np.ndarray | None = None):
    with open(path, "wb") as f:
        f.write(encode_png(rgb, alpha))


def _mask_png(mask: np.ndarray) -> np.ndarray:
    return np.where(mask, 255, 0).astype(np.uint8)


def model_documents(model: LearnedModel) -> tuple[dict, dict, dict]:
    """(manifest, model doc, asset name -> PNG bytes) in canonical form."""
    manifest = {"eta": model.eta,
                "world": {"width": model.world_size[0],
                          "height": model.world_size[1]},
                "background_color": list(model.background_color),
                "observations": []}
    assets: dict[str, bytes] = {}
    mops = []
    for op in model.ops:
        pre_name = f"patch_{op.index:04d}_pre.png"
        post_name = f"patch_{op.index:04d}_post.png"
        assets[pre_name] = encode_png(op.pre_obs.patch)
        assets[post_name] = encode_png(op.post_obs.patch)
        src_name = f"mask_{op.index:04d}_src.png"
        dst_name = f"mask_{op.index:04d}_dst.png"
        assets[src_name] = encode_png(np.dstack([_mask_png(op.source_mask)] * 3))
        assets[dst_name] = encode_png(np.dstack([_mask_png(op.dest_mask)] * 3))
        obj_name = f"object_{op.index:04d}.png"
        assets[obj_name] = encode_png(op.object_patch, _mask_png(op.object_mask))
        for phase, fname, obs, pose in (
                ("pre", pre_name, op.pre_obs, op.pose_pre),
                ("post", post_name, op.post_obs, op.pose_post)):
            manifest["observations"].append({
                "op_index": op.index, "phase": phase, "file": fname,
                "frame": _frame_to_json(obs.frame),
                "pose": _pose_to_json(pose)})
        mops.append({
            "index": op.index, "action": op.action,
            "pose_pre": _pose_to_json(op.pose_pre),
            "pose_post": _pose_to_json(op.pose_post),
            "symbol": {"name": op.symbol.name, "attrs": dict(op.symbol.attrs)},
            "constraints_pre": _preds_to_json(op.c_pre),
            "constraints_post": _preds_to_json(op.c_post),
            "context_pre": [
                {"id": oid, "attrs": dict(attrs), "predicates": _preds_to_json(ps)}
                for oid, attrs, ps in op.context_pre],
            "anchor_landmark": op.anchor_landmark,
            "anchor_offset": [_r(op.anchor_offset[0]), _r(op.anchor_offset[1])],
            "object_size": op.object_size,
            "source_mask": f"mask_{op.index:04d}_src.png",
            "dest_mask": f"mask_{op.index:04d}_dst.png",
            "object_patch": obj_name,
        })
    model_doc = {"policy": list(model.policy),
                 "frames": {"pre_pick_scale": model.frames.pre_pick_scale,
                            "pre_place_scale": model.frames.pre_place_scale,
                            "min_template": model.frames.min_template},
                 "ops": mops,
                 "labels": sorted(model.label_sprites)}
    for name in sorted(model.label_sprites):
        rgb, alpha = model.label_sprites[name]
        assets[f"label_{name}.png"] = encode_png(rgb, alpha)
    return manifest, model_doc, assets


def save_model(model: LearnedModel, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    manifest, model_doc, assets = model_documents(model)
    for name, data in assets.items():
        with open(os.path.join(out_dir, name), "wb") as f:
            f.write(data)
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    with open(os.path.join(out_dir, "model.json"), "w", encoding="utf-8") as f:
        json.dump(model_doc, f, indent=1, sort_keys=True)


def _read_png(path: str):
    with open(path, "rb") as f:
        return decode_png(f.read())


def load_model(model_dir: str) -> LearnedModel:
    with open(os.path.join(model_dir, "manifest.json"), encoding="utf-8") as f:
        manifest = json.load(f)
    with open(os.path.join(model_dir, "model.json"), encoding="utf-8") as f:
        doc = json.load(f)
    obs_index = {(o["op_index"], o["phase"]): o for o in manifest["observations"]}
    ops = []
    for row in doc["ops"]:
        i = row["index"]
        entries = {}
        for phase in ("pre", "post"):
            meta = obs_index[(i, phase)]
            rgb, _ = _read_png(os.path.join(model_dir, meta["file"]))
            entries[phase] = Observation(patch=rgb,
                                         frame=_frame_from_json(meta["frame"]),
                                         phase=phase, op_index=i)
        src_mask = _read_png(os.path.join(model_dir, row["source_mask"]))[0][:, :, 0] >= 128
        dst_mask = _read_png(os.path.join(model_dir, row["dest_mask"]))[0][:, :, 0] >= 128
        obj_rgb, obj_alpha = _read_png(os.path.join(model_dir, row["object_patch"]))
        obj_mask = obj_alpha >= 128
        feats = (perception.extract_features(obj_rgb, mask=obj_mask)
                 if obj_rgb.shape[0] >= 16 and obj_rgb.shape[1] >= 16
                 else perception.FeatureSet(np.zeros((0, 2)), np.zeros((0, 64))))
        sym = row["symbol"]
        ops.append(OpRecord(
            index=i, action=row["action"],
            pre_obs=entries["pre"], post_obs=entries["post"],
            pose_pre=_pose_from_json(row["pose_pre"]),
            pose_post=_pose_from_json(row["pose_post"]),
            object_patch=obj_rgb, object_mask=obj_mask,
            source_mask=src_mask, dest_mask=dst_mask,
            features=feats,
            symbol=core.ObjectSymbol(sym["name"],
                                     tuple(sorted(sym["attrs"].items()))),
            c_pre=_preds_from_json(row["constraints_pre"]),
            c_post=_preds_from_json(row["constraints_post"]),
            context_pre=tuple(
                (c["id"], tuple(sorted(c["attrs"].items())),
                 _preds_from_json(c["predicates"]))
                for c in row["context_pre"]),
            anchor_landmark=row["anchor_landmark"],
            anchor_offset=tuple(row["anchor_offset"]),
            object_size=row["object_size"]))
    labels = {}
    for name in doc.get("labels", []):
        labels[name] = _read_png(os.path.join(model_dir, f"label_{name}.png"))
    frames = FrameConfig(**doc["frames"])
    return LearnedModel(ops=tuple(ops), frames=frames,
                        world_size=(manifest["world"]["width"],
                                    manifest["world"]["height"]),
                        background_color=tuple(manifest["background_color"]),
                        label_sprites=labels)
