"""Visuospatial skill learning over a simulated 2D tabletop.

Record a tutor's object rearrangement once, learn it from pre/post
observations, and reproduce it from reshuffled starts; learn primitive
motions as damped-spring dynamical systems; ground actions into planning
schemas with ordering constraints; and run a minimal 3D perception chain on
synthetic point clouds.
"""

from . import (core, errors, model_io, motion, perception, scenarios,
               symbolic, vsl3d, world)
from .core import (DemonstrationRecorder, LearnedModel, ReproductionEngine,
                   ReproOptions, record_demonstration, reproduce)
from .world import (DemoScript, Landmark, Pose2, SceneObject, TutorOp, World,
                    apply_operation, detect_landmarks, load_scenario, render)

__version__ = "0.1.0"

__all__ = [
    "core", "errors", "model_io", "motion", "perception", "scenarios",
    "symbolic", "vsl3d", "world",
    "DemonstrationRecorder", "LearnedModel", "ReproductionEngine",
    "ReproOptions", "record_demonstration", "reproduce",
    "DemoScript", "Landmark", "Pose2", "SceneObject", "TutorOp", "World",
    "apply_operation", "detect_landmarks", "load_scenario", "render",
    "__version__",
]
