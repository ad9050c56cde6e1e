"""Ray-transform and scattering-table checks against independent oracles."""

import numpy as np
import pytest
from scipy.integrate import cumulative_simpson, simpson

import magray.expressions as ex
import magray.flow as flow
import magray.geometry as geo
import magray.harmonics as hm
import magray.scene as sc
import magray.transport as tr


def _mode0(expr):
    return hm.ModeFn(1, {0: (ex.parse(expr),)})


def test_scattering_blocks_unitary(attenuated2):
    sd = tr.scattering_data(attenuated2)
    gram = np.einsum("spji,spjl->spil", sd.C.conj(), sd.C)
    eye = np.eye(attenuated2.n)
    assert np.abs(gram - eye).max() < 1e-8


def test_euclidean_scatter_closed_form(euclidean):
    sd = tr.scattering_data(euclidean)
    S, F = np.meshgrid(sd.s, sd.phi, indexing="ij")
    ds = geo.wrap_angle(sd.exit_s - (S + np.pi + 2 * F))
    assert np.abs(ds).max() < 1e-6
    assert np.abs(sd.exit_phi + F).max() < 1e-6


def test_transform_of_one_is_travel_time(euclidean):
    vals = tr.ray_transform(euclidean, _mode0("1"))
    bg = geo.boundary_grid(euclidean)
    tau = 2.0 * np.cos(bg.phi)[None, :]
    assert np.abs(vals[:, :, 0].real - tau).max() < 1e-8
    assert np.abs(vals.imag).max() < 1e-12


def test_constant_scalar_attenuation_closed_form(euclidean):
    # for constant scalar Phi the transport weight along a chord is exp(Phi t)
    # with t measured from the entry point, so I(1) = (exp(Phi tau) - 1)/Phi
    phi_const = -0.8j
    scn = euclidean.with_attenuation(
        euclidean.Ax, euclidean.Ay, ((ex.parse("-0.8*i"),),))
    vals = tr.ray_transform(scn, _mode0("1"))
    bg = geo.boundary_grid(scn)
    tau = 2.0 * np.cos(bg.phi)[None, :]
    want = (np.exp(phi_const * tau) - 1.0) / phi_const
    assert np.abs(vals[:, :, 0] - want).max() < 1e-8


def test_varying_scalar_attenuation_quadrature_oracle(euclidean):
    # independent route: straight chord + scipy cumulative Simpson for the
    # accumulated attenuation, then Simpson for the weighted line integral
    scn = euclidean.with_attenuation(
        euclidean.Ax, euclidean.Ay,
        ((ex.parse("i*(0.5 - 0.7*x + 0.4*y^2)"),),))
    f = _mode0("1 + 0.5*x - 0.2*y")
    vals = tr.ray_transform(scn, f)
    bg = geo.boundary_grid(scn)

    def phi_field(x, y):
        return 1j * (0.5 - 0.7 * x + 0.4 * y**2)

    def f_field(x, y):
        return 1.0 + 0.5 * x - 0.2 * y

    for i, j in [(0, bg.nphi // 2), (11, 7), (40, 20)]:
        s, phi = bg.s[i], bg.phi[j]
        x0, y0, th = geo.inflow_to_phase(s, phi)
        tau = 2.0 * np.cos(phi)
        t = np.linspace(0.0, tau, 4001)
        x = x0 + t * np.cos(th)
        y = y0 + t * np.sin(th)
        pv = phi_field(x, y)
        psi = (cumulative_simpson(pv.real, x=t, initial=0.0)
               + 1j * cumulative_simpson(pv.imag, x=t, initial=0.0))
        integrand = np.exp(psi) * f_field(x, y)
        oracle = (simpson(integrand.real, x=t)
                  + 1j * simpson(integrand.imag, x=t))
        assert abs(vals[i, j, 0] - oracle) < 5e-6 * max(1.0, abs(oracle))


def test_kernel_transform_identity(attenuated):
    a = hm.ModeFn(1, {
        0: (ex.parse("0.3 + x*y"),),
        1: (ex.parse("0.2*x - 0.1*i*y"),),
        -1: (ex.parse("0.1 + 0.05*y"),),
        2: (ex.parse("0.08*x"),),
        -2: (ex.parse("0.05 - 0.02*x"),),
    })
    res = tr.kernel_transform_identity(attenuated, a)
    assert res["l2_rel"] < 1e-4
    assert res["sup_rel"] < 1e-3


def test_gauge_change_preserves_scattering(attenuated):
    base = tr.scattering_data(attenuated)
    G, Gi = tr.bump_gauge(attenuated, seed=0)
    sd = tr.scattering_data(tr.gauged_scene(attenuated, G, Gi))
    assert np.abs(sd.C - base.C).max() < 1e-5


def test_boundary_fn_matches_chart_evaluation(attenuated):
    u = hm.ModeFn(1, {0: (ex.parse("0.3 + x*y"),),
                      1: (ex.parse("0.2*x"),),
                      -2: (ex.parse("0.05 - 0.02*x"),)})
    b = tr.boundary_fn_of_modefn(u, attenuated, chart="inflow")
    bg = geo.boundary_grid(attenuated)
    S, F = np.meshgrid(bg.s, bg.phi, indexing="ij")
    x, y, th = geo.inflow_to_phase(S, F)
    assert np.abs(b - u.evaluate(x, y, th)).max() < 1e-13
