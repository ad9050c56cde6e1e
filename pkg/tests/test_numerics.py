import numpy as np
import pytest

from magray import numerics as nm


def test_fornberg_first_derivative_weights():
    # classical 5-point centred stencil
    w = nm.fornberg_weights(0.0, np.array([-2.0, -1.0, 0.0, 1.0, 2.0]), 1)
    assert np.allclose(w, [1 / 12, -8 / 12, 0, 8 / 12, -1 / 12])


def test_fd4_exact_on_quartics():
    h = 0.1
    x = np.arange(-2, 13) * h          # includes a 2-cell halo on both sides
    vals = x**4 - 2 * x**2 + 3
    d = nm.apply_fd4_halo(vals, h, axis=0)
    exact = 4 * x**3 - 4 * x
    assert np.abs(d - exact[2:-2]).max() < 1e-10


def test_interp2d_exact_on_cubics():
    xs = np.linspace(0, 1, 11)
    ys = np.linspace(0, 1, 9)
    rng = np.random.default_rng(3)
    tx = rng.uniform(0.15, 0.85, 40)
    ty = rng.uniform(0.15, 0.85, 40)
    P = nm.interp2d_matrix(xs, ys, tx, ty)
    F = (xs[:, None] ** 3 - xs[:, None] * ys[None, :] ** 2
         + 2 * ys[None, :])
    got = P @ F.ravel()
    want = tx**3 - tx * ty**2 + 2 * ty
    assert np.abs(got - want).max() < 1e-12


def test_interp_periodic_wraps():
    n = 32
    xs = np.arange(n) * (2 * np.pi / n)
    t = np.array([2 * np.pi - 0.01, 0.01])
    P = nm.interp_matrix_1d(xs, t, periodic=2 * np.pi)
    f = np.sin(xs)
    got = P @ f
    assert np.abs(got - np.sin(t)).max() < 1e-6


def test_cgne_matches_lstsq():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((30, 12)) + 1j * rng.standard_normal((30, 12))
    b = rng.standard_normal(30) + 1j * rng.standard_normal(30)
    x, relres, it, hist = nm.cgne(lambda v: A @ v,
                                  lambda r: A.conj().T @ r, b,
                                  maxiter=400, rtol=1e-12, ntol=1e-14)
    want, *_ = np.linalg.lstsq(A, b, rcond=None)
    assert np.abs(x - want).max() < 1e-8
    assert hist[0] == pytest.approx(1.0)


def test_cgne_consistent_system_converges():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((20, 20)) + np.eye(20) * 5
    xt = rng.standard_normal(20)
    b = A @ xt
    x, relres, it, _ = nm.cgne(lambda v: A @ v, lambda r: A.T @ r, b,
                               maxiter=500, rtol=1e-10)
    assert relres < 1e-10
    assert np.abs(x - xt).max() < 1e-6


def test_cgne_inconsistent_relres_is_distance():
    # b with a component outside the column span: relres converges to the
    # relative distance from the range, not to zero
    A = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    b = np.array([1.0, 1.0, 1.0])
    x, relres, it, _ = nm.cgne(lambda v: A @ v, lambda r: A.T @ r, b,
                               maxiter=50, rtol=1e-12)
    assert relres == pytest.approx(1.0 / np.sqrt(3.0), abs=1e-10)


def test_cgne_weighted_inner_products():
    rng = np.random.default_rng(6)
    A = rng.standard_normal((15, 6))
    wd = rng.uniform(0.5, 2.0, 15)
    b = rng.standard_normal(15)
    inner = lambda u, v: complex(np.vdot(u * wd, v))
    # adjoint w.r.t. the weighted data product
    x, relres, it, _ = nm.cgne(lambda v: A @ v,
                               lambda r: A.T @ (wd * r), b,
                               maxiter=300, rtol=1e-12, ntol=1e-15,
                               inner_data=inner)
    # normal equations of the weighted least-squares problem
    want = np.linalg.solve(A.T @ (wd[:, None] * A), A.T @ (wd * b))
    assert np.abs(x - want).max() < 1e-8


def test_halo_matrix_extrapolates_linears_exactly():
    # acts on the full padded square: rows for nodes with r <= 1 copy the
    # value, rows outside the rim extrapolate radially, so a globally linear
    # field must come back unchanged everywhere
    xs = np.linspace(-1, 1, 33)
    h = xs[1] - xs[0]
    pad = np.concatenate(([xs[0] - 2 * h, xs[0] - h], xs,
                          [xs[-1] + h, xs[-1] + 2 * h]))
    H = nm.halo_matrix(pad)
    PX, PY = np.meshgrid(pad, pad, indexing="ij")
    f = 2 * PX - 3 * PY + 1
    ext = (H @ f.ravel()).reshape(PX.shape)
    inside = np.hypot(PX, PY) <= 1.0
    assert np.abs(ext - f)[inside].max() == 0.0
    assert np.abs(ext - f).max() < 1e-9
