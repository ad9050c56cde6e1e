"""Forms calculus: derivatives, Hodge star, splittings, degree twists."""

import numpy as np
import pytest

import magray.calculus as ca
import magray.expressions as ex
import magray.geometry as geo
import magray.harmonics as hm
import magray.scene as sc


def _sample_pts(rng, m=40, rmax=0.9):
    r = rmax * np.sqrt(rng.uniform(size=m))
    t = rng.uniform(0, 2 * np.pi, size=m)
    return r * np.cos(t), r * np.sin(t)


def test_connection_derivative_of_function(euclidean):
    om = ca.d_A(euclidean, (ex.parse("x^2*y"),))
    rng = np.random.default_rng(3)
    x, y = _sample_pts(rng)
    ax = ex.compile_expr(om.ax[0], force_complex=True)(x, y)
    ay = ex.compile_expr(om.ay[0], force_complex=True)(x, y)
    assert np.abs(ax - 2 * x * y).max() < 1e-12
    assert np.abs(ay - x**2).max() < 1e-12


def test_hodge_star_rotates_one_forms(conformal):
    # conformally invariant on one-forms: star(dx) = dy, star(dy) = -dx
    om = ca.hodge_star(conformal, ca.oneform((ex.parse("1"),),
                                             (ex.parse("0"),)))
    rng = np.random.default_rng(4)
    x, y = _sample_pts(rng)
    assert np.abs(ex.compile_expr(om.ax[0])(x, y)).max() < 1e-14
    assert np.abs(ex.compile_expr(om.ay[0])(x, y) - 1.0).max() < 1e-14
    om2 = ca.hodge_star(conformal, ca.hodge_star(
        conformal, ca.oneform((ex.parse("x*y"),), (ex.parse("y^2"),))))
    ax2 = ex.compile_expr(om2.ax[0])(x, y)
    assert np.abs(ax2 + x * y).max() < 1e-12


def test_codifferential_is_negative_divergence(euclidean):
    beta = ca.oneform((ex.parse("x^2*y"),), (ex.parse("y^3"),))
    out = ca.d_A_star(euclidean, beta)
    rng = np.random.default_rng(5)
    x, y = _sample_pts(rng)
    got = ex.compile_expr(out[0], force_complex=True)(x, y)
    assert np.abs(got + (2 * x * y + 3 * y**2)).max() < 1e-12


def test_curl_identity_symbolic_vs_fiber_routes(attenuated):
    alpha = ca.oneform((ex.parse("(0.4 + 0.2*x - 0.3*y)*(1 - x^2 - y^2)"),),
                       (ex.parse("(0.1 + 0.5*x*y)*(1 - x^2 - y^2)"),))
    res = ca.star_dA_mode_identity(attenuated, alpha)
    assert res["sup_rel"] < 1e-9
    assert not res["stray_modes"]


@pytest.mark.parametrize("m", [1, -1, 3])
def test_twist_defining_identity(conformal, m):
    tw = ca.twist(conformal, m)
    assert tw.identity_residual < 1e-10
    assert tw.m == m
    assert tw.scene.n == conformal.n


def test_boundary_h_power_is_unimodular(attenuated):
    bh = ca.boundary_h_power(attenuated, 2)
    assert bh.shape == (64, 32)
    assert np.abs(np.abs(bh) - 1.0).max() < 1e-12
    assert np.abs(ca.boundary_h_power(attenuated, 0) - 1.0).max() == 0.0
    assert np.abs(ca.boundary_h_power(attenuated, -2) - bh.conj()).max() < 1e-12


def test_one_form_splitting_round_trip(euclidean):
    alpha = ca.oneform((ex.parse("0.3 + x^2*y - y"),),
                       (ex.parse("x*y^2 + 0.1*x"),))
    dec = ca.decompose_one_form(euclidean, alpha)
    assert dec.residual < 1e-5
    sam = ca.sample_oneform(euclidean, alpha)
    rec_ax = dec.dp.ax + dec.sda.ax
    rec_ay = dec.dp.ay + dec.sda.ay
    if dec.eta is not None:
        rec_ax = rec_ax + dec.eta.ax
        rec_ay = rec_ay + dec.eta.ay
    scale = max(np.abs(sam.ax).max(), np.abs(sam.ay).max())
    assert np.abs(rec_ax - sam.ax).max() < 1e-5 * scale
    assert np.abs(rec_ay - sam.ay).max() < 1e-5 * scale
    # the potential part decays toward the rim (Dirichlet data is zero there;
    # the outermost masked nodes still sit about one cell inside)
    g = dec.grid
    xm, ym = g.xs[g.mask.nonzero()[0]], g.ys[g.mask.nonzero()[1]]
    rim = np.hypot(xm, ym) > 0.97
    assert rim.any()
    assert np.abs(dec.p[rim]).max() < 0.25 * np.abs(dec.p).max()


def test_stream_pair_solver_on_manufactured_data():
    scn = sc.scene_from_dict({"n": 1, "lambda": "0.3", "Phi": [["-i*0.8"]]})
    g = geo.sm_grid(scn)
    xi, yi = g.mask.nonzero()
    xm, ym = g.xs[xi], g.ys[yi]
    phim = np.asarray(scn.higgs_fn(xm, ym))
    omega = ca.oneform((ex.parse("(0.2 + 0.4*y)*(1 - x^2 - y^2)"),),
                       (ex.parse("(0.3 - 0.1*x)*(1 - x^2 - y^2)"),))
    fsym = ex.compile_expr(ex.parse("(0.5 + 0.2*x*y)*(1 - x^2 - y^2)"),
                           force_complex=True)
    dec = ca.decompose_one_form(scn, omega)
    f = fsym(xm, ym)[:, None]
    fprime = f - np.einsum("pij,pj->pi", phim, dec.p)
    beta = ca.solve_beta(scn, fprime, dec.a)
    assert beta.residual_star < 1e-4
    assert beta.residual_div < 1e-4
    assert isinstance(beta.beta, ca.OneForm)
    assert beta.beta.ax.shape == dec.a.shape


def test_one_form_fiber_function_is_velocity_pairing(euclidean):
    u = ca.tensor_to_fn(euclidean, ca.oneform((ex.parse("1"),),
                                              (ex.parse("0"),)))
    assert set(u.modes) == {1, -1}
    rng = np.random.default_rng(6)
    x, y = _sample_pts(rng, m=25)
    th = rng.uniform(0, 2 * np.pi, size=x.size)
    vals = u.evaluate(x, y, th)[..., 0]
    assert np.abs(vals - np.cos(th)).max() < 1e-12

    alpha = ca.oneform((ex.parse("x - 0.2*y^2"),), (ex.parse("0.7*x*y"),))
    u2 = ca.oneform_fiber_fn(euclidean, alpha)
    vals2 = u2.evaluate(x, y, th)[..., 0]
    want = (x - 0.2 * y**2) * np.cos(th) + 0.7 * x * y * np.sin(th)
    assert np.abs(vals2 - want).max() < 1e-12
