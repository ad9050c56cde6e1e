"""Scene model: the disk geometry, magnetic intensity, and attenuation pair.

A scene bundles everything the rest of the toolkit needs:

* ``sigma`` — conformal factor σ, metric g = e^{2σ}(dx² + dy²) on the closed
  unit disk;
* ``lam`` — magnetic intensity λ (the Lorentz force is λ · rotation by +π/2);
* ``Ax, Ay`` — components of a skew-Hermitian (unitary-connection) matrix
  1-form A = Ax dx + Ay dy;
* ``Phi`` — skew-Hermitian Higgs field (zeroth-order matrix potential);
* grid resolutions and ODE stepping parameters.

All coefficient fields are closed-form expressions in x and y (see
:mod:`magray.expressions`), which keeps every field exactly differentiable —
twists, curvature and gauge transforms are computed symbolically rather than by
finite differences.  Scenes are immutable after load; validation happens once,
on a 17×17 probe grid over the closed disk.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import expressions as ex
from .errors import (RankMismatch, SceneValidationError, SkewHermitianViolation)

__all__ = ["Scene", "scene_from_dict", "load_scene", "builtin_scene",
           "BUILTIN_SCENES"]

_PROBE_N = 17


def _parse_entry(v) -> ex.Expr:
    if isinstance(v, str):
        return ex.parse(v)
    if isinstance(v, (int, float)):
        return ex.const(v)
    raise SceneValidationError(f"expression entry must be a string, got {v!r}")


def _parse_matrix(name, raw, n) -> tuple:
    if raw is None:
        return tuple(tuple(ex.ZERO for _ in range(n)) for _ in range(n))
    if not isinstance(raw, Sequence) or len(raw) != n:
        raise RankMismatch(name, (n, n), np.shape(raw))
    rows = []
    for row in raw:
        if not isinstance(row, Sequence) or isinstance(row, str) or len(row) != n:
            raise RankMismatch(name, (n, n), np.shape(raw))
        rows.append(tuple(_parse_entry(v) for v in row))
    return tuple(rows)


def _matrix_evaluator(entries, n) -> Callable:
    fns = [[ex.compile_expr(entries[i][j], force_complex=True)
            for j in range(n)] for i in range(n)]

    def evalm(x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        shape = np.broadcast_shapes(x.shape, y.shape)
        out = np.empty(shape + (n, n), dtype=np.complex128)
        for i in range(n):
            for j in range(n):
                out[..., i, j] = fns[i][j](x, y)
        return out

    return evalm


def _matrix_is_zero(entries) -> bool:
    return all(ex.expr_is_zero(e) for row in entries for e in row)


@dataclass(frozen=True, eq=False)
class Scene:
    """Immutable problem instance; construct via :func:`scene_from_dict`."""

    n: int
    sigma: ex.Expr
    lam: ex.Expr
    Ax: tuple
    Ay: tuple
    Phi: tuple
    nx: int = 64
    ntheta: int = 64
    ns: int = 64
    nphi: int = 32
    dt: float = 1e-3
    tol: float = 1e-12
    table_dt: float = 1e-2
    t_max: float = 20.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        n = self.n
        if not (isinstance(n, int) and n >= 1):
            raise SceneValidationError(f"rank n must be a positive integer, got {n!r}")
        if self.ntheta % 2 != 0 or self.ntheta < 8:
            raise SceneValidationError(
                f"ntheta must be even and >= 8, got {self.ntheta}")
        for nm in ("nx", "ns", "nphi"):
            if getattr(self, nm) < 8:
                raise SceneValidationError(f"{nm} must be >= 8")
        for nm in ("dt", "tol", "table_dt", "t_max"):
            if not getattr(self, nm) > 0:
                raise SceneValidationError(f"{nm} must be positive")
        for nm in ("Ax", "Ay", "Phi"):
            m = getattr(self, nm)
            if len(m) != n or any(len(r) != n for r in m):
                raise RankMismatch(nm, (n, n), (len(m), len(m[0]) if m else 0))

        set_ = object.__setattr__
        set_(self, "sigma_x", ex.diff(self.sigma, "x"))
        set_(self, "sigma_y", ex.diff(self.sigma, "y"))
        set_(self, "sigma_fn", ex.compile_expr(self.sigma))
        set_(self, "sigma_x_fn", ex.compile_expr(self.sigma_x))
        set_(self, "sigma_y_fn", ex.compile_expr(self.sigma_y))
        set_(self, "lam_fn", ex.compile_expr(self.lam))
        set_(self, "conn_x_fn", _matrix_evaluator(self.Ax, n))
        set_(self, "conn_y_fn", _matrix_evaluator(self.Ay, n))
        set_(self, "higgs_fn", _matrix_evaluator(self.Phi, n))
        set_(self, "conn_is_zero", _matrix_is_zero(self.Ax) and _matrix_is_zero(self.Ay))
        set_(self, "higgs_is_zero", _matrix_is_zero(self.Phi))
        set_(self, "has_attenuation",
             not (self.conn_is_zero and self.higgs_is_zero))
        self._validate()

    # -- validation --------------------------------------------------------

    def _validate(self):
        t = np.linspace(-1.0, 1.0, _PROBE_N)
        gx, gy = np.meshgrid(t, t, indexing="ij")
        inside = gx**2 + gy**2 <= 1.0 + 1e-12
        px, py = gx[inside], gy[inside]

        for nm, f in (("sigma", self.sigma_fn), ("lambda", self.lam_fn)):
            vals = np.asarray(f(px, py))
            if not np.all(np.isfinite(vals)):
                raise SceneValidationError(f"{nm} is not finite on the closed disk")
            if np.iscomplexobj(vals) and np.max(np.abs(vals.imag)) > 1e-12:
                raise SceneValidationError(f"{nm} must be real-valued")

        for nm, f in (("Ax", self.conn_x_fn), ("Ay", self.conn_y_fn),
                      ("Phi", self.higgs_fn)):
            m = f(px, py)
            if not np.all(np.isfinite(m)):
                raise SceneValidationError(f"{nm} is not finite on the closed disk")
            dev = np.abs(m + np.conj(np.swapaxes(m, -1, -2))).max(axis=(-1, -2))
            worst = int(np.argmax(dev))
            if dev[worst] > 1e-12:
                raise SkewHermitianViolation(
                    nm, (float(px[worst]), float(py[worst])), float(dev[worst]))

    # -- conveniences ------------------------------------------------------

    def metric_factor(self, x, y):
        """e^{σ(x,y)}."""
        return np.exp(self.sigma_fn(x, y))

    def to_dict(self) -> dict:
        fmt = ex.format_expr
        return {
            "n": self.n,
            "sigma": fmt(self.sigma),
            "lambda": fmt(self.lam),
            "Ax": [[fmt(e) for e in row] for row in self.Ax],
            "Ay": [[fmt(e) for e in row] for row in self.Ay],
            "Phi": [[fmt(e) for e in row] for row in self.Phi],
            "grid": {"nx": self.nx, "ntheta": self.ntheta,
                     "ns": self.ns, "nphi": self.nphi},
            "ode": {"dt": self.dt, "tol": self.tol,
                    "table_dt": self.table_dt, "t_max": self.t_max},
        }

    def with_attenuation(self, Ax, Ay, Phi) -> "Scene":
        """Same geometry and grids, different attenuation pair (expression trees)."""
        return Scene(n=len(Ax), sigma=self.sigma, lam=self.lam,
                     Ax=tuple(tuple(r) for r in Ax),
                     Ay=tuple(tuple(r) for r in Ay),
                     Phi=tuple(tuple(r) for r in Phi),
                     nx=self.nx, ntheta=self.ntheta, ns=self.ns, nphi=self.nphi,
                     dt=self.dt, tol=self.tol, table_dt=self.table_dt,
                     t_max=self.t_max)


def scene_from_dict(d: dict) -> Scene:
    """Build and validate a Scene from the JSON-level dictionary format."""
    if "n" not in d:
        raise SceneValidationError("scene is missing the rank field 'n'")
    n = d["n"]
    if not isinstance(n, int) or n < 1:
        raise SceneValidationError(f"rank n must be a positive integer, got {n!r}")
    grid = d.get("grid", {})
    ode = d.get("ode", {})
    try:
        sigma = _parse_entry(d.get("sigma", "0"))
        lam = _parse_entry(d.get("lambda", "0"))
        Ax = _parse_matrix("Ax", d.get("Ax"), n)
        Ay = _parse_matrix("Ay", d.get("Ay"), n)
        Phi = _parse_matrix("Phi", d.get("Phi"), n)
    except (RankMismatch, SceneValidationError):
        raise
    return Scene(
        n=n, sigma=sigma, lam=lam, Ax=Ax, Ay=Ay, Phi=Phi,
        nx=int(grid.get("nx", 64)), ntheta=int(grid.get("ntheta", 64)),
        ns=int(grid.get("ns", 64)), nphi=int(grid.get("nphi", 32)),
        dt=float(ode.get("dt", 1e-3)), tol=float(ode.get("tol", 1e-12)),
        table_dt=float(ode.get("table_dt", 1e-2)),
        t_max=float(ode.get("t_max", 20.0)),
    )


def load_scene(path) -> Scene:
    """Load a scene from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        return scene_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# built-in scenes used by the demos and the verification harness

BUILTIN_SCENES = {
    # flat metric, no magnetic field, no attenuation
    "euclidean": {"n": 1},
    # flat metric with a constant magnetic intensity (still simple)
    "magnetic": {"n": 1, "lambda": "0.3"},
    # curved metric + variable magnetic intensity, no attenuation
    "conformal-magnetic": {
        "n": 1,
        "sigma": "0.15*(1 - x^2 - y^2)",
        "lambda": "0.2 + 0.1*x",
    },
    # full system, rank 1
    "attenuated": {
        "n": 1,
        "sigma": "0.12*(1 - x^2 - y^2)",
        "lambda": "0.2*(1 - 0.5*y)",
        "Ax": [["i*(0.3*y + 0.1)"]],
        "Ay": [["-i*0.3*x"]],
        "Phi": [["i*(0.25 + 0.2*x)"]],
    },
    # full system, rank 2 (non-commuting attenuation)
    "attenuated2": {
        "n": 2,
        "sigma": "0.1*(1 - x^2 - y^2)",
        "lambda": "0.15",
        "Ax": [["i*0.25*y", "0.2*x + i*0.1*y"],
               ["-0.2*x + i*0.1*y", "-i*0.15*x"]],
        "Ay": [["-i*0.2*x", "0.1 - i*0.15*x"],
               ["-0.1 - i*0.15*x", "i*0.1*y"]],
        "Phi": [["i*0.3", "0.15*y + i*0.1"],
                ["-0.15*y + i*0.1", "-i*0.2"]],
    },
    # flat scene whose magnetic intensity breaks strict magnetic convexity
    "strong-magnetic": {"n": 1, "lambda": "2"},
}


def builtin_scene(name: str, **overrides) -> Scene:
    """Named example scene; grid/ODE keywords override the defaults."""
    if name not in BUILTIN_SCENES:
        raise KeyError(f"unknown scene {name!r}; available: "
                       + ", ".join(sorted(BUILTIN_SCENES)))
    scn = scene_from_dict(dict(BUILTIN_SCENES[name]))
    if overrides:
        kw = {k: getattr(scn, k) for k in
              ("n", "sigma", "lam", "Ax", "Ay", "Phi", "nx", "ntheta",
               "ns", "nphi", "dt", "tol", "table_dt", "t_max")}
        kw.update(overrides)
        scn = Scene(**kw)
    return scn
