"""Adjoint transforms, duality pairings, normal-operator probes, solvers."""

import numpy as np
import pytest

import magray.adjoint as ad
import magray.calculus as ca
import magray.expressions as ex
import magray.geometry as geo
import magray.harmonics as hm
import magray.harness as hz
import magray.scene as sc
from magray.errors import FrequencyUnresolvable

TWO_PI = 2.0 * np.pi


@pytest.fixture(scope="module")
def higgs():
    return sc.scene_from_dict({"n": 1, "lambda": "0.3", "Phi": [["-i*0.8"]]})


@pytest.fixture(scope="module")
def probe_scene():
    return sc.builtin_scene("euclidean", nx=48, ntheta=48, ns=128, nphi=64)


def test_constant_data_adjoints(magnetic):
    # with no attenuation the transport extension of constant data stays
    # constant, so the degree-0 adjoint is 2*pi*c and the degree-1 part is 0
    bg = geo.boundary_grid(magnetic)
    c = 0.7 - 0.2j
    w = np.full((bg.ns, bg.nphi, 1), c)
    o0 = ad.adjoint_transform(magnetic, w, "order0")
    assert np.abs(o0 - TWO_PI * c).max() < 1e-10
    o1 = ad.adjoint_transform(magnetic, w, "order1")
    assert max(np.abs(o1.ax).max(), np.abs(o1.ay).max()) < 1e-12


def test_order1_routes_agree(magnetic):
    rng = np.random.default_rng(21)
    w = hz.random_boundary_data(rng, magnetic, jmax=2, kmax=1, envelope_pow=2)
    om_fft = ad.adjoint_transform(magnetic, w, "order1")
    om_fib = ad.order1_fiber_integral(magnetic, w)
    sup = max(np.abs(om_fft.ax - om_fib.ax).max(),
              np.abs(om_fft.ay - om_fib.ay).max())
    ref = max(np.abs(om_fft.ax).max(), np.abs(om_fft.ay).max())
    assert sup < 1e-12 * ref


def test_duality_pairings(magnetic):
    rng = np.random.default_rng(22)
    h = hz.random_boundary_data(rng, magnetic, jmax=2, kmax=1, envelope_pow=2)
    f0 = hm.ModeFn(1, {0: (ex.parse("(0.4 + 0.3*x - 0.2*y)*(1 - x^2 - y^2)"),)})
    assert ad.pairing_gap(magnetic, 0, f0, h) < 2e-4
    alpha = ca.oneform((ex.parse("(0.2 + 0.1*y)*(1 - x^2 - y^2)"),),
                       (ex.parse("(0.3*x)*(1 - x^2 - y^2)"),))
    assert ad.pairing_gap(magnetic, 1, alpha, h) < 1e-4


def test_mode_route_matches_direct_transform(magnetic):
    g = geo.sm_grid(magnetic)
    xi, yi = g.mask.nonzero()
    xm, ym = g.xs[xi], g.ys[yi]

    # cubic in (x, y): node interpolation and halo extension are both exact
    f3 = hm.ModeFn(1, {0: (ex.parse("(0.4 + 0.3*x - 0.2*y)*(1 - x^2 - y^2)"),)})
    c3 = ((0.4 + 0.3 * xm - 0.2 * ym) * (1 - xm**2 - ym**2))
    I_modes = ad.ray_transform_modes(magnetic, {0: c3.astype(complex)[:, None]})
    I_direct = hz.transport.ray_transform(magnetic, f3)
    assert np.abs(I_modes - I_direct).max() < 1e-12 * np.abs(I_direct).max()

    # transcendental field: the interpolating route carries honest stencil error
    expr = "(0.4 + 0.3*x - 0.2*y)*(1 - x^2 - y^2)*exp(0.3*x)"
    ft = hm.ModeFn(1, {0: (ex.parse(expr),)})
    ct = c3 * np.exp(0.3 * xm)
    I_m = ad.ray_transform_modes(magnetic, {0: ct.astype(complex)[:, None]})
    I_d = hz.transport.ray_transform(magnetic, ft)
    assert 1e-12 < np.abs(I_m - I_d).max() < 1e-4 * np.abs(I_d).max()


def test_normal_symbol_decays_like_inverse_frequency(probe_scene):
    a1 = ad.normal_probe(probe_scene, (12.0, 0.0), "00")
    a2 = ad.normal_probe(probe_scene, (24.0, 0.0), "00")
    ratio = a1["amplitude"] / a2["amplitude"]
    assert 1.65 < ratio < 2.35
    assert a1["block"] == "00"
    assert a1["nx"] == 48


def test_unresolvable_frequency_raises(probe_scene):
    with pytest.raises(FrequencyUnresolvable):
        ad.normal_probe(probe_scene, (2000.0, 0.0), "00")


def test_band_projector_properties(magnetic):
    proj = ad._boundary_band_projector(magnetic, 6, 5)
    bg = geo.boundary_grid(magnetic)
    rng = np.random.default_rng(23)
    v = rng.standard_normal(bg.ns * bg.nphi) + 1j * rng.standard_normal(
        bg.ns * bg.nphi)
    u = rng.standard_normal(v.size) + 1j * rng.standard_normal(v.size)
    pv = proj(v)
    assert np.abs(proj(pv) - pv).max() < 1e-12
    assert abs(np.vdot(proj(u), v) - np.vdot(u, proj(v))) < 1e-10
    # a low-order field already in the subspace is left untouched
    sq = np.sqrt(np.cos(bg.phi) * bg.phi_w)
    t = bg.phi / (0.5 * np.pi)
    v0 = (np.exp(2j * bg.s)[:, None] * (sq * t**2)[None, :]).ravel()
    assert np.abs(proj(v0) - v0).max() < 1e-12 * np.abs(v0).max()


def test_pair_solver_reaches_compatible_targets(higgs):
    g = geo.sm_grid(higgs)
    xi, yi = g.mask.nonzero()
    xm, ym = g.xs[xi], g.ys[yi]
    omega = ca.oneform((ex.parse("(0.2 + 0.4*y)*(1 - x^2 - y^2)^2"),),
                       (ex.parse("(0.3 - 0.1*x)*(1 - x^2 - y^2)^2"),))
    ds = ca.d_A_star(higgs, omega)
    dsv = ex.compile_expr(ds[0], force_complex=True)(xm, ym)
    f = (dsv / (-0.8j))[:, None]
    w, rep = ad.solve_adjoint_pair(higgs, f, omega, maxiter=120, rtol=5e-4)
    assert rep["relres"] < 1e-3
    bg = geo.boundary_grid(higgs)
    assert w.shape == (bg.ns, bg.nphi, 1)
    assert len(rep["history"]) == rep["iterations"] + 1
