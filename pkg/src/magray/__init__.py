"""Numerical toolkit for attenuated ray transforms of magnetic flows on the unit disk.

The package studies the geodesic flow of a conformal metric e^{2σ}(dx²+dy²) on
the closed unit disk, perturbed by a magnetic intensity λ (Lorentz force = λ ×
rotation by +π/2), with matrix attenuation given by a unitary connection A and a
skew-Hermitian Higgs field Φ.  It provides ray tracing and scattering data,
parallel-transport solutions, forward and adjoint attenuated ray transforms,
fiberwise Fourier/Hilbert analysis, a twisted calculus of connections on forms,
and a verification harness that checks the operator identities tying all of
these together.
"""

from .errors import (
    MagrayError, ExprSyntaxError, UnknownIdentifier, SceneValidationError,
    SkewHermitianViolation, RankMismatch, TrappedRay, BandLimitExceeded,
    SolverStalled, ResolutionTooCoarse,
)
from .expressions import parse, format_expr, diff, compile_expr, evaluate
from .scene import Scene, load_scene, scene_from_dict, builtin_scene

__all__ = [
    "MagrayError", "ExprSyntaxError", "UnknownIdentifier", "SceneValidationError",
    "SkewHermitianViolation", "RankMismatch", "TrappedRay", "BandLimitExceeded",
    "SolverStalled", "ResolutionTooCoarse",
    "parse", "format_expr", "diff", "compile_expr", "evaluate",
    "Scene", "load_scene", "scene_from_dict", "builtin_scene",
]
