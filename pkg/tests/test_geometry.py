import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magray import geometry as geo


def test_unit_speed_frame(conformal):
    rng = np.random.default_rng(0)
    r = np.sqrt(rng.uniform(0, 0.97, 50))
    t = rng.uniform(0, 2 * np.pi, 50)
    x, y = r * np.cos(t), r * np.sin(t)
    th = rng.uniform(0, 2 * np.pi, 50)
    vx, vy = geo.unit_velocity(conformal, x, y, th)
    gnorm = np.exp(conformal.sigma_fn(x, y)) * np.hypot(vx, vy)
    assert np.allclose(gnorm, 1.0, atol=1e-14)


def test_boundary_measure_total(euclidean, conformal):
    # rim length 2*pi (sigma vanishes on the rim) times int cos(phi) dphi = 2
    for scn in (euclidean, conformal):
        assert geo.mu_weights(scn).sum() == pytest.approx(4 * np.pi, rel=1e-12)


def test_disk_area_euclidean(euclidean):
    assert geo.disk_area_weights(euclidean).sum() == pytest.approx(
        np.pi, rel=2e-2)


def test_disk_area_conformal(conformal):
    # closed form: int e^{2*sigma} dA for sigma = 0.15(1-r^2) in polar coords
    exact = np.pi * np.exp(0.3) * (1 - np.exp(-0.3)) / 0.3
    assert geo.disk_area_weights(conformal).sum() == pytest.approx(
        exact, rel=2e-2)


def test_gauss_curvature_closed_forms(euclidean, conformal):
    assert geo.gauss_curvature(euclidean, 0.3, -0.4) == pytest.approx(0.0)
    # sigma = 0.15(1-r^2): Laplacian -0.6, so K(0,0) = 0.6 e^{-0.3}
    assert geo.gauss_curvature(conformal, 0.0, 0.0) == pytest.approx(
        0.6 * np.exp(-0.3), rel=1e-12)


def test_convexity_margin_euclidean(euclidean, magnetic):
    s = np.linspace(0, 2 * np.pi, 9)
    lam_e, margin_e = geo.convexity_margin(euclidean, s)
    assert np.allclose(lam_e, 1.0) and np.allclose(margin_e, 1.0)
    _, margin_m = geo.convexity_margin(magnetic, s)
    assert np.allclose(margin_m, 0.7)


@settings(max_examples=80, deadline=None)
@given(t=st.floats(-50, 50))
def test_wrap_angle_range(t):
    w = geo.wrap_angle(t)
    assert -np.pi - 1e-12 <= w <= np.pi + 1e-12
    assert np.isclose(np.sin(w), np.sin(t), atol=1e-9)
    assert np.isclose(np.cos(w), np.cos(t), atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(s=st.floats(0, 2 * np.pi - 1e-9),
       phi=st.floats(-np.pi / 2 + 1e-3, np.pi / 2 - 1e-3))
def test_inflow_chart_round_trip(s, phi):
    x, y, th = geo.inflow_to_phase(s, phi)
    assert np.hypot(x, y) == pytest.approx(1.0, abs=1e-12)
    s2, phi2 = geo.phase_to_rim_coords(x, y, th)[:2], None
    sb, phib = geo.phase_to_rim_coords(x, y, th)
    assert np.isclose(geo.wrap_angle(sb - s), 0.0, atol=1e-9)
    assert np.isclose(phib, phi, atol=1e-9)


def test_fiber_chart_round_trip():
    s = np.linspace(0, 2 * np.pi, 11)[:-1]
    a = np.linspace(-np.pi + 0.05, np.pi - 0.05, 9)
    S, A = np.meshgrid(s, a, indexing="ij")
    x, y, th = geo.fiber_to_phase(S, A)
    assert np.allclose(np.hypot(x, y), 1.0)


def test_sm_grid_mask(euclidean):
    g = geo.sm_grid(euclidean)
    gx, gy = g.meshgrid()
    assert g.mask[gx**2 + gy**2 <= 1.0].all()
    assert not g.mask[gx**2 + gy**2 > 1.0 + 1e-9].any()
    assert g.h == pytest.approx(2.0 / 63)


def test_inner_product_weights(magnetic):
    rng = np.random.default_rng(1)
    f = rng.standard_normal((magnetic.ns, magnetic.nphi, 1))
    val = geo.mu_inner(magnetic, f, f).real
    assert val > 0
    # constant function integrates to the full measure
    one = np.ones((magnetic.ns, magnetic.nphi, 1))
    assert geo.mu_inner(magnetic, one, one).real == pytest.approx(4 * np.pi)
