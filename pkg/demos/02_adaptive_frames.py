"""Disambiguation with adaptive match frames on the roof-placement task.

Three identical house bodies get three identical roofs; the third roof goes
*below* its house.  A small fixed search frame cannot tell the houses apart
at reproduction time; growing the frame adds context until only one match
survives.
"""

import os

from vsl import perception, scenarios
from vsl._raster import encode_png
from vsl.core import ReproductionEngine, ReproOptions, record_demonstration
from vsl.errors import Ambiguous
from vsl.world import render

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

fx = scenarios.roof()
model = record_demonstration(fx.world, fx.script)
world, _ = scenarios.reshuffle(fx, seed=4)

engine = ReproductionEngine(world, model,
                            options=ReproOptions(match_mode="adaptive"))
engine.step()
engine.step()
raster = render(engine.world)
with open(os.path.join(OUT, "roof_before_third_op.png"), "wb") as f:
    f.write(encode_png(raster))

rec = model.ops[2]
print("third operation: place a roof below the one house that has none")
try:
    perception.find_best_match(
        raster, rec.post_obs, None, mode="fixed",
        anchor=(rec.pose_post.x, rec.pose_post.y),
        mask=~rec.dest_mask, template_size=56)
    print("  fixed 56px frame: unexpectedly unambiguous")
except Ambiguous as e:
    spots = ", ".join(f"({c.x:.0f},{c.y:.0f}) s={c.score:.3f}"
                      for c in e.candidates)
    print(f"  fixed 56px frame: {len(e.candidates)} equally good spots: {spots}")

report = perception.AdaptiveReport()
pose, score, frame = perception.find_best_match(
    raster, rec.post_obs, None, mode="adaptive",
    anchor=(rec.pose_post.x, rec.pose_post.y),
    mask=~rec.dest_mask, template_size=max(24, rec.object_size),
    report=report)
print("  adaptive frames:")
for size, count in zip(report.sizes, report.counts):
    print(f"    frame {size:3d}px -> {count} candidate(s)")
print(f"  resolved at ({pose.x:.0f},{pose.y:.0f}) "
      f"score {score:.3f} using a {frame.width}px frame")

engine.step()
with open(os.path.join(OUT, "roof_final.png"), "wb") as f:
    f.write(encode_png(render(engine.world)))
print("final render written to demos/out/roof_final.png")
