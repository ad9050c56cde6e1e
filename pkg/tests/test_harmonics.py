import numpy as np
import pytest

from magray import expressions as ex, geometry as geo, harmonics as hm
from magray.errors import BandLimitExceeded


def _single_mode(scene, k, src="(1-x^2-y^2)*(x + 0.5*y)*exp(0.3*x)"):
    return hm.ModeFn(n=1, modes={k: (ex.parse(src),)})


def test_fiber_modes_round_trip():
    rng = np.random.default_rng(0)
    u = rng.standard_normal((5, 5, 16, 1)) + 1j * rng.standard_normal((5, 5, 16, 1))
    c = hm.fiber_modes(u)
    back = hm.synthesize(c)
    assert np.abs(back - u).max() < 1e-13


def test_parseval():
    rng = np.random.default_rng(1)
    u = rng.standard_normal((4, 4, 32, 2))
    c = hm.fiber_modes(u)
    lhs = np.mean(np.abs(u) ** 2, axis=2)
    rhs = np.sum(np.abs(c) ** 2, axis=2)
    assert np.abs(lhs - rhs).max() < 1e-14


def test_hilbert_single_modes():
    # multiplier -i sgn(k) on e^{ik theta}, identity-free mode 0
    th = np.arange(24) * (2 * np.pi / 24)
    for k, fac in ((3, -1j), (-2, 1j), (0, 0.0)):
        u = np.exp(1j * k * th)[None, None, :, None]
        h = hm.hilbert_samples(u)
        assert np.abs(h - fac * u).max() < 1e-13


def test_hilbert_squared():
    rng = np.random.default_rng(2)
    u = rng.standard_normal((3, 3, 16, 1))
    hh = hm.hilbert_samples(hm.hilbert_samples(u))
    u0 = u.mean(axis=2, keepdims=True)
    assert np.abs(hh + u - u0).max() < 1e-13


def test_generator_matches_symbolic_route(euclidean):
    # grid stencils against the exact mode-algebra derivative (lambda = 0,
    # so the generator is pure X)
    u = _single_mode(euclidean, 1)
    lhs = hm.gk_apply(euclidean, u.to_grid(euclidean), "G")
    rhs = hm.mf_apply_generator(euclidean, u).to_grid(euclidean)
    g = geo.sm_grid(euclidean)
    diff = np.abs(lhs.values - rhs.values)[g.mask]
    assert diff.max() < 5e-6


def test_raising_lowering_shift_exact(conformal):
    u = _single_mode(conformal, 2).to_grid(conformal)
    g = geo.sm_grid(conformal)
    for which, kout in (("eta+", 3), ("eta-", 1)):
        v = hm.gk_apply(conformal, u, which)
        cm = np.fft.fft(v.values[g.mask], axis=1) / conformal.ntheta
        tot = np.sum(np.abs(cm) ** 2)
        kept = np.sum(np.abs(cm[:, kout]) ** 2)
        assert np.sqrt(max(tot - kept, 0.0) / tot) < 1e-12


def test_vertical_derivative(euclidean):
    u = _single_mode(euclidean, 4).to_grid(euclidean)
    v = hm.gk_apply(euclidean, u, "V")
    assert np.abs(v.values - 4j * u.values).max() < 1e-10


def test_horizontal_splits_into_shifts(conformal):
    # X = eta_+ + eta_- as operators on a single mode
    u = _single_mode(conformal, 1)
    ug = u.to_grid(conformal)
    lhs = hm.gk_apply(conformal, ug, "X").values
    rhs = (hm.gk_apply(conformal, ug, "eta+").values
           + hm.gk_apply(conformal, ug, "eta-").values)
    assert np.abs(lhs - rhs).max() < 1e-10


def test_mode_arithmetic():
    a = hm.ModeFn(n=1, modes={0: (ex.parse("x"),)})
    b = hm.ModeFn(n=1, modes={0: (ex.parse("y"),), 2: (ex.parse("1"),)})
    s = hm.mf_add(a, b, cv=-2.0)
    got = s.evaluate(np.array([0.3]), np.array([0.4]), np.array([0.0]))
    assert got[0, 0] == pytest.approx(0.3 - 2 * 0.4 - 2.0)


def test_attenuation_operator_zero_connection(magnetic):
    # Phi = 0 and A = 0: attenuation term vanishes identically
    u = _single_mode(magnetic, 1)
    att = hm.mf_apply_attenuation(magnetic, u)
    vals = att.evaluate(np.array([0.2]), np.array([0.1]), np.array([0.7]))
    assert np.abs(vals).max() < 1e-14


def test_band_limit_guard():
    vals = np.zeros((3, 3, 16, 1), dtype=complex)
    vals += np.exp(1j * 7 * np.arange(16) * 2 * np.pi / 16)[None, None, :, None]
    with pytest.raises(BandLimitExceeded):
        hm.check_band_margin(vals)


def test_commutator_residual_small(attenuated):
    u = hm.ModeFn(n=1, modes={
        k: (ex.parse("(1-x^2-y^2)*exp(0.2*x - 0.1*y)*(x + i*y)"),)
        for k in (-2, 0, 1)})
    r = hm.commutator_residual(attenuated, u)
    assert r["sup_rel"] < 1e-5
