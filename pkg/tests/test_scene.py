import json

import numpy as np
import pytest

from magray import scene as sc
from magray.errors import (MagrayError, RankMismatch, SceneValidationError,
                           SkewHermitianViolation)


def test_builtin_names():
    for name in sc.BUILTIN_SCENES:
        scn = sc.builtin_scene(name)
        assert scn.nx == 64 and scn.ntheta == 64


def test_defaults():
    scn = sc.scene_from_dict({"n": 1})
    assert (scn.nx, scn.ntheta, scn.ns, scn.nphi) == (64, 64, 64, 32)
    assert scn.conn_is_zero and scn.higgs_is_zero


def test_grid_overrides():
    scn = sc.builtin_scene("euclidean", nx=32, ns=48)
    assert scn.nx == 32 and scn.ns == 48 and scn.ntheta == 64


def test_scene_from_dict_nested_grid():
    scn = sc.scene_from_dict({"n": 1, "grid": {"nx": 16, "nphi": 12},
                              "ode": {"dt": 5e-4}})
    assert scn.nx == 16 and scn.nphi == 12 and scn.dt == 5e-4


def test_compiled_fields():
    scn = sc.builtin_scene("conformal-magnetic")
    x, y = 0.3, -0.2
    assert scn.sigma_fn(x, y) == pytest.approx(0.15 * (1 - x * x - y * y))
    assert scn.lam_fn(x, y) == pytest.approx(0.2 + 0.1 * x)


def test_higgs_skew_hermitian_enforced():
    with pytest.raises(SkewHermitianViolation):
        sc.scene_from_dict({"n": 1, "Phi": [["1"]]})


def test_connection_skew_hermitian_enforced():
    with pytest.raises(SkewHermitianViolation):
        sc.scene_from_dict({"n": 1, "Ax": [["x"]]})


def test_matrix_rank_checked():
    with pytest.raises((RankMismatch, MagrayError)):
        sc.scene_from_dict({"n": 2, "Phi": [["i"]]})


def test_bad_grid_rejected():
    with pytest.raises(SceneValidationError):
        sc.scene_from_dict({"n": 1, "grid": {"ntheta": 15}})
    with pytest.raises(SceneValidationError):
        sc.scene_from_dict({"n": 1, "grid": {"nx": 4}})


def test_rank2_builtin_skew():
    scn = sc.builtin_scene("attenuated2")
    x, y = 0.4, 0.1
    for f in (scn.conn_x_fn, scn.conn_y_fn, scn.higgs_fn):
        m = np.asarray(f(x, y))
        assert np.allclose(m + np.conj(m.T), 0.0, atol=1e-12)


def test_with_attenuation_replaces_fields():
    base = sc.builtin_scene("magnetic")
    scn = base.with_attenuation(base.Ax, base.Ay, ((sc.ex.parse("i*0.5"),),))
    assert not scn.higgs_is_zero
    assert scn.lam_fn(0.1, 0.2) == pytest.approx(base.lam_fn(0.1, 0.2))


def test_load_scene_file(tmp_path):
    p = tmp_path / "scn.json"
    p.write_text(json.dumps({"n": 1, "sigma": "0.1*(1-x^2-y^2)",
                             "lambda": "0.25"}))
    scn = sc.load_scene(p)
    assert scn.sigma_fn(0.0, 0.0) == pytest.approx(0.1)
