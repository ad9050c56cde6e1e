"""Plumbing of the verification suite: results, reports, artifacts."""

import csv
import json

import numpy as np
import pytest

import magray.geometry as geo
import magray.harness as hz


def test_check_result_status_strings():
    ok = hz.CheckResult("a", True, 1e-9, 1e-6)
    bad = hz.CheckResult("b", False, 1e-3, 1e-6)
    skip = hz.CheckResult("c", None, float("nan"), 1e-6)
    assert (ok.status, bad.status, skip.status) == ("PASS", "FAIL", "SKIP")
    d = bad.to_dict()
    assert d["status"] == "FAIL" and d["tol"] == 1e-6 and not d["error"]


def test_suite_report_pass_logic():
    ok = hz.CheckResult("a", True, 0.0, 1.0)
    skip = hz.CheckResult("c", None, 0.0, 1.0)
    assert hz.SuiteReport([ok, skip], 1.0).passed
    bad = hz.CheckResult("b", False, 2.0, 1.0, error=True)
    rep = hz.SuiteReport([ok, bad], 1.0)
    assert not rep.passed
    assert rep.had_error
    assert rep.to_dict()["checks"][1]["name"] == "b"


def test_every_registered_check_is_ordered():
    assert list(hz.CHECKS) == hz.CHECK_ORDER
    assert len(hz.CHECK_ORDER) == 13
    assert len(set(hz.CHECK_ORDER)) == 13


def test_scene_bank_caches_instances():
    bank = hz.SceneBank()
    a = bank.get("euclidean")
    assert bank.get("euclidean") is a
    assert bank.get("higgs1").n == 1
    assert bank.get("higgs2").n == 2


def test_random_boundary_data_shape_and_envelope(euclidean):
    rng = np.random.default_rng(1)
    w = hz.random_boundary_data(rng, euclidean, jmax=2, kmax=1,
                                envelope_pow=2)
    bg = geo.boundary_grid(euclidean)
    assert w.shape == (bg.ns, bg.nphi, euclidean.n)
    assert np.iscomplexobj(w)
    # cos^2 envelope suppresses the grazing-ray columns
    edge = np.abs(w[:, [0, -1]]).max()
    assert edge < 0.2 * np.abs(w).max()


def test_refinement_test_fields_are_not_low_degree_polynomials():
    # a field the high-order stencils could differentiate exactly would make
    # refinement checks vacuous, so the generator must mix in a transcendental
    rng = np.random.default_rng(2)
    e = hz._random_smooth(rng, degree=2)
    assert "exp" in hz.ex.format_expr(e)


def test_run_suite_single_check_with_artifacts(tmp_path):
    rep = hz.run_suite(["euclidean-closed-form"], report_dir=str(tmp_path),
                       verbose=False)
    assert rep.passed and not rep.had_error
    assert len(rep.results) == 1
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["passed"] is True
    assert data["checks"][0]["name"] == "euclidean-closed-form"
    assert data["checks"][0]["status"] == "PASS"


def test_run_suite_rejects_unknown_check():
    with pytest.raises(KeyError):
        hz.run_suite(["no-such-check"], verbose=False)


def test_history_csv_round_trip(tmp_path):
    path = tmp_path / "h.csv"
    hz._write_history_csv(path, [1.0, 0.25, 0.03125])
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iteration", "relres"]
    assert [r[0] for r in rows[1:]] == ["0", "1", "2"]
    assert float(rows[2][1]) == pytest.approx(0.25)
