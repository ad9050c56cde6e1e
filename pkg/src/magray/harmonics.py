"""Fiberwise Fourier analysis on SM and the vertical-mode operator algebra.

Functions u(x, y, θ) decompose into fiber modes u = Σ_k û_k(x,y) e^{ikθ} with
û_k = (1/2π)∫ u e^{-ikθ} dθ (so û_0 is the fiber average).  Two representations
coexist:

* :class:`ModeFn` — a band-limited function whose mode coefficients are closed
  -form expressions.  The frame operators act *exactly* on this form:

      η₊(c e^{ikθ}) = ½ e^{-σ} [(∂x − i∂y)c − k(σ_x − iσ_y)c] e^{i(k+1)θ}
      η₋(c e^{ikθ}) = ½ e^{-σ} [(∂x + i∂y)c + k(σ_x + iσ_y)c] e^{i(k−1)θ}

  with X = η₊ + η₋, X⊥ = −i(η₊ − η₋), V = ik, G = X + λV, plus multiplication
  by the attenuation pair (the connection contributes its ±1 fiber modes
  A_{±1} = ½ e^{-σ}(A_x ∓ iA_y), the Higgs field sits in mode 0).

* :class:`FiberGridFn` — samples on the (x, y, θ) product grid.  Here ∂θ is
  spectral (FFT), spatial derivatives are 4th-order central stencils applied to
  a two-cell halo (exact for expression-backed fields, extrapolated otherwise),
  and the fiber Hilbert transform is the multiplier −i·sgn(k).

The Fredholm-style commutator check pits the two representations against each
other: the left side [H, G + A + Φ]u is assembled symbolically (exact), the
right side (X⊥ + ⋆A)u₀ + ((X⊥ + ⋆A)u)₀ through the grid pipeline, so the
residual isolates the grid discretization error and must shrink at 4th order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from . import expressions as ex
from . import geometry as geo
from . import numerics as nm
from .errors import BandLimitExceeded

__all__ = [
    "ModeFn", "modefn_from_scalar", "mf_add", "mf_scale", "mf_hilbert",
    "mf_project", "mf_apply_V", "mf_apply_eta", "mf_apply_X", "mf_apply_Xperp",
    "mf_apply_generator", "mf_mult_matrix", "conn_fiber_modes",
    "mf_apply_attenuation", "mf_transport_op",
    "FiberGridFn", "grid_fn_from_values", "ensure_halo",
    "fiber_modes", "mode_coefficient", "synthesize", "hilbert_samples",
    "grid_hilbert", "fiber_average", "gk_apply", "band_of", "check_band_margin",
    "eval_fiber_fn", "commutator_residual", "star_conn_mult",
]


# ---------------------------------------------------------------------------
# symbolic representation

@dataclass(frozen=True, eq=False)
class ModeFn:
    """Band-limited fiber function with expression coefficients per mode."""

    n: int
    modes: Dict[int, Tuple[ex.Expr, ...]]

    def band(self) -> int:
        return max((abs(k) for k in self.modes), default=0)

    def evaluate(self, x, y, theta):
        """Values with a trailing component axis, complex."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        theta = np.asarray(theta, dtype=float)
        shape = np.broadcast_shapes(x.shape, y.shape, theta.shape)
        out = np.zeros(shape + (self.n,), dtype=complex)
        for k, coefs in self.modes.items():
            ph = np.exp(1j * k * theta)
            for j, c in enumerate(coefs):
                out[..., j] += ex.compile_expr(c, force_complex=True)(x, y) * ph
        return out

    def to_grid(self, scene, nx=None) -> "FiberGridFn":
        """Sample on the SM grid, with an exactly-evaluated halo."""
        g = geo.sm_grid(scene, nx)
        xs_pad = _pad_axis(g.xs)
        gx, gy = np.meshgrid(xs_pad, xs_pad, indexing="ij")
        th = g.thetas[None, None, :]
        vals_pad = self.evaluate(gx[:, :, None], gy[:, :, None], th)
        return FiberGridFn(grid=g, values=vals_pad[2:-2, 2:-2],
                           halo=vals_pad)


def modefn_from_scalar(expr: ex.Expr, k: int = 0, n: int = 1) -> ModeFn:
    """Single-mode scalar helper: expr(x,y) · e^{ikθ} in component 0."""
    coefs = tuple(expr if j == 0 else ex.ZERO for j in range(n))
    return ModeFn(n=n, modes={k: coefs})


def _zero_coefs(n):
    return tuple(ex.ZERO for _ in range(n))


def _acc(modes, n, k, j, term):
    coefs = list(modes.get(k, _zero_coefs(n)))
    coefs[j] = coefs[j] + term
    modes[k] = tuple(coefs)


def _clean(modes, n):
    return {k: v for k, v in modes.items()
            if any(not ex.expr_is_zero(c) for c in v)}


def mf_add(u: ModeFn, v: ModeFn, cu=1.0, cv=1.0) -> ModeFn:
    out = {}
    for k in set(u.modes) | set(v.modes):
        a = u.modes.get(k, _zero_coefs(u.n))
        b = v.modes.get(k, _zero_coefs(u.n))
        out[k] = tuple(ex.as_expr(cu) * ai + ex.as_expr(cv) * bi
                       for ai, bi in zip(a, b))
    return ModeFn(n=u.n, modes=_clean(out, u.n))


def mf_scale(u: ModeFn, c) -> ModeFn:
    ce = ex.as_expr(c)
    return ModeFn(n=u.n, modes=_clean(
        {k: tuple(ce * ci for ci in v) for k, v in u.modes.items()}, u.n))


def mf_hilbert(u: ModeFn) -> ModeFn:
    """Fiber Hilbert transform: multiplier −i·sgn(k), sgn(0) = 0."""
    out = {}
    for k, v in u.modes.items():
        if k == 0:
            continue
        m = ex.const(-1j * np.sign(k))
        out[k] = tuple(m * ci for ci in v)
    return ModeFn(n=u.n, modes=out)


def mf_project(u: ModeFn, k: int) -> ModeFn:
    return ModeFn(n=u.n, modes={k: u.modes[k]} if k in u.modes else {})


def mf_apply_V(u: ModeFn) -> ModeFn:
    out = {k: tuple(ex.const(1j * k) * ci for ci in v)
           for k, v in u.modes.items() if k != 0}
    return ModeFn(n=u.n, modes=out)


def _em_expr(scene):
    key = "em_expr"
    if key not in scene._cache:
        scene._cache[key] = ex.Call("exp", -scene.sigma)
    return scene._cache[key]


def mf_apply_eta(scene, u: ModeFn, sign: int) -> ModeFn:
    """η₊ (sign=+1, raising) or η₋ (sign=−1, lowering), exact per mode."""
    em = _em_expr(scene)
    sx, sy = scene.sigma_x, scene.sigma_y
    half = ex.const(0.5)
    ii = ex.Imag()
    out = {}
    for k, coefs in u.modes.items():
        for j, c in enumerate(coefs):
            if ex.expr_is_zero(c):
                continue
            cx, cy = ex.diff(c, "x"), ex.diff(c, "y")
            if sign > 0:
                term = half * em * ((cx - ii * cy)
                                    - ex.const(k) * (sx - ii * sy) * c)
            else:
                term = half * em * ((cx + ii * cy)
                                    + ex.const(k) * (sx + ii * sy) * c)
            _acc(out, u.n, k + sign, j, term)
    return ModeFn(n=u.n, modes=_clean(out, u.n))


def mf_apply_X(scene, u: ModeFn) -> ModeFn:
    return mf_add(mf_apply_eta(scene, u, +1), mf_apply_eta(scene, u, -1))


def mf_apply_Xperp(scene, u: ModeFn) -> ModeFn:
    """X⊥ = −i(η₊ − η₋)."""
    return mf_add(mf_apply_eta(scene, u, +1), mf_apply_eta(scene, u, -1),
                  cu=-1j, cv=1j)


def mf_apply_generator(scene, u: ModeFn) -> ModeFn:
    """G = X + λV."""
    lamV = ModeFn(n=u.n, modes=_clean(
        {k: tuple(scene.lam * ex.const(1j * k) * ci for ci in v)
         for k, v in u.modes.items()}, u.n))
    return mf_add(mf_apply_X(scene, u), lamV)


def mf_mult_matrix(u: ModeFn, mat, shift: int = 0) -> ModeFn:
    """Multiply by a matrix of expressions carried on the fiber mode ``shift``."""
    n = u.n
    out = {}
    for k, coefs in u.modes.items():
        for i in range(n):
            term = ex.ZERO
            for j in range(n):
                term = term + mat[i][j] * coefs[j]
            if not ex.expr_is_zero(term):
                _acc(out, n, k + shift, i, term)
    return ModeFn(n=n, modes=_clean(out, n))


def conn_fiber_modes(scene):
    """The connection's fiber modes A_{±1} = ½ e^{-σ}(A_x ∓ iA_y) (expressions)."""
    key = "conn_fiber_modes"
    if key not in scene._cache:
        em = _em_expr(scene)
        half = ex.const(0.5)
        ii = ex.Imag()
        n = scene.n
        Ap = [[half * em * (scene.Ax[i][j] - ii * scene.Ay[i][j])
               for j in range(n)] for i in range(n)]
        Am = [[half * em * (scene.Ax[i][j] + ii * scene.Ay[i][j])
               for j in range(n)] for i in range(n)]
        scene._cache[key] = (Ap, Am)
    return scene._cache[key]


def mf_apply_attenuation(scene, u: ModeFn) -> ModeFn:
    """(A(γ̇) + Φ) u as mode algebra: shifts ±1 for A, shift 0 for Φ."""
    Ap, Am = conn_fiber_modes(scene)
    out = mf_mult_matrix(u, scene.Phi, 0)
    out = mf_add(out, mf_mult_matrix(u, Ap, +1))
    return mf_add(out, mf_mult_matrix(u, Am, -1))


def mf_transport_op(scene, u: ModeFn) -> ModeFn:
    """(G + A + Φ) u — the full transport operator, exact."""
    return mf_add(mf_apply_generator(scene, u), mf_apply_attenuation(scene, u))


# ---------------------------------------------------------------------------
# grid representation

def _pad_axis(xs):
    h = xs[1] - xs[0]
    return np.concatenate([[xs[0] - 2 * h, xs[0] - h], xs,
                           [xs[-1] + h, xs[-1] + 2 * h]])


@dataclass(eq=False)
class FiberGridFn:
    """Samples on the (x, y, θ) grid, trailing component axis, complex dtype.

    ``halo`` (when present) is the same field on the two-cell padded square,
    either sampled exactly (expression-backed fields) or extrapolated past the
    rim; all spatial stencils read the halo so every in-disk node gets a full
    central stencil.
    """

    grid: geo.SMGrid
    values: np.ndarray                  # (nx, nx, ntheta, n)
    halo: Optional[np.ndarray] = None   # (nx+4, nx+4, ntheta, n)

    @property
    def n(self):
        return self.values.shape[-1]

    def masked(self):
        return self.values[self.grid.mask]

    def sup(self):
        return float(np.abs(self.values[self.grid.mask]).max())


def grid_fn_from_values(scene, values, nx=None, halo=None) -> FiberGridFn:
    g = geo.sm_grid(scene, nx)
    values = np.asarray(values, dtype=complex)
    if values.ndim == 3:
        values = values[..., None]
    return FiberGridFn(grid=g, values=values, halo=halo)


def ensure_halo(scene, u: FiberGridFn) -> FiberGridFn:
    """Attach a halo by radial cubic extrapolation (cached operator per grid)."""
    if u.halo is not None:
        return u
    g = u.grid
    key = ("halo_matrix", g.nx)
    if key not in scene._cache:
        scene._cache[key] = nm.halo_matrix(_pad_axis(g.xs))
    H = scene._cache[key]
    npad = g.nx + 4
    comp = u.values.reshape(g.nx, g.nx, -1)
    padded = np.zeros((npad, npad, comp.shape[-1]), dtype=complex)
    padded[2:-2, 2:-2] = comp
    flat = (H @ padded.reshape(npad * npad, -1)).reshape(npad, npad, -1)
    halo = flat.reshape((npad, npad) + u.values.shape[2:])
    return FiberGridFn(grid=g, values=u.values, halo=halo)


# -- fiber FFT analysis ------------------------------------------------------

def fiber_modes(values, axis=2):
    """Coefficients c_k in u = Σ c_k e^{ikθ}; index with mode_coefficient."""
    return np.fft.fft(values, axis=axis) / values.shape[axis]


def mode_coefficient(coeffs, k, axis=2):
    return np.take(coeffs, k % coeffs.shape[axis], axis=axis)


def synthesize(coeffs, axis=2):
    return np.fft.ifft(coeffs * coeffs.shape[axis], axis=axis)


def band_of(values, axis=2, tol=1e-13):
    """Largest |k| whose coefficient exceeds tol · max (0 for the zero field)."""
    c = fiber_modes(values, axis)
    mags = np.abs(c)
    peak = mags.max()
    if peak == 0.0:
        return 0
    ks = np.fft.fftfreq(values.shape[axis], 1.0 / values.shape[axis]).astype(int)
    amp = np.moveaxis(mags, axis, 0).reshape(values.shape[axis], -1)
    active = amp.max(axis=1) > tol * peak
    return int(np.abs(ks[active]).max()) if np.any(active) else 0


def check_band_margin(values, axis=2, margin=2, tol=1e-12):
    """Raise when fiber content crowds the Nyquist band (margin cells)."""
    N = values.shape[axis]
    b = band_of(values, axis, tol)
    if b > N // 2 - margin:
        raise BandLimitExceeded(
            f"fiber band {b} exceeds N/2 - {margin} = {N // 2 - margin}")
    return b


def hilbert_samples(values, axis=2):
    """Fiber Hilbert transform of sampled data: multiplier −i·sgn(k).

    Valid on any uniformly-spaced fiber grid (offset grids included, since a
    pure multiplier is insensitive to the common phase of the sample comb).
    """
    N = values.shape[axis]
    F = np.fft.fft(values, axis=axis)
    ks = np.fft.fftfreq(N, 1.0 / N)
    mult = -1j * np.sign(ks)
    shape = [1] * values.ndim
    shape[axis] = N
    return np.fft.ifft(F * mult.reshape(shape), axis=axis)


def grid_hilbert(u: FiberGridFn) -> FiberGridFn:
    return FiberGridFn(grid=u.grid, values=hilbert_samples(u.values),
                       halo=hilbert_samples(u.halo)
                       if u.halo is not None else None)


def fiber_average(u: FiberGridFn):
    """û_0 — mean over the fiber, shape (nx, nx, n) (+ halo average if present)."""
    avg = u.values.mean(axis=2)
    havg = u.halo.mean(axis=2) if u.halo is not None else None
    return avg, havg


# -- frame operators on the grid --------------------------------------------

def _frame_arrays(scene, g: geo.SMGrid):
    key = ("frame_arrays", g.nx)
    if key not in scene._cache:
        gx, gy = g.meshgrid()
        X, Xp = geo.frame_coefficients(scene, gx[:, :, None], gy[:, :, None],
                                       g.thetas[None, None, :])
        lam = scene.lam_fn(gx, gy)
        scene._cache[key] = (X, Xp, lam)
    return scene._cache[key]


def _dtheta(values):
    N = values.shape[2]
    F = np.fft.fft(values, axis=2)
    ks = np.fft.fftfreq(N, 1.0 / N)
    return np.fft.ifft(F * (1j * ks)[None, None, :, None], axis=2)


def gk_apply(scene, u: FiberGridFn, which: str) -> FiberGridFn:
    """Apply a frame/ladder operator on the grid.

    ``which`` ∈ {'X', 'Xperp', 'V', 'G', 'eta+', 'eta-', 'mu+', 'mu-'}.
    Spatial derivatives are 4th-order central stencils on the halo; ∂θ is
    spectral; the connection enters μ± through its ±1 fiber modes.
    """
    u = ensure_halo(scene, u)
    g = u.grid
    check_band_margin(u.values)
    (aX, bX, cX), (aP, bP, cP) = _frame_arrays(scene, g)[:2]
    lam = _frame_arrays(scene, g)[2]

    if which == "V":
        return FiberGridFn(grid=g, values=_dtheta(u.values))

    Dx = nm.apply_fd4_halo(u.halo, g.h, axis=0)[:, 2:-2]
    Dy = nm.apply_fd4_halo(u.halo, g.h, axis=1)[2:-2, :]
    Dth = _dtheta(u.values)

    Xu = aX[..., None] * Dx + bX[..., None] * Dy + cX[..., None] * Dth
    if which == "X":
        return FiberGridFn(grid=g, values=Xu)
    if which == "G":
        return FiberGridFn(grid=g, values=Xu + lam[:, :, None, None] * Dth)

    Xpu = aP[..., None] * Dx + bP[..., None] * Dy + cP[..., None] * Dth
    if which == "Xperp":
        return FiberGridFn(grid=g, values=Xpu)
    if which in ("eta+", "mu+"):
        vals = 0.5 * (Xu + 1j * Xpu)
    elif which in ("eta-", "mu-"):
        vals = 0.5 * (Xu - 1j * Xpu)
    else:
        raise ValueError(f"unknown operator {which!r}")

    if which in ("mu+", "mu-"):
        sign = 1 if which == "mu+" else -1
        Ap, Am = conn_fiber_modes(scene)
        mat = Ap if sign > 0 else Am
        gx, gy = g.meshgrid()
        M = np.empty((g.nx, g.nx, u.n, u.n), dtype=complex)
        for i in range(u.n):
            for j in range(u.n):
                M[..., i, j] = ex.compile_expr(mat[i][j],
                                               force_complex=True)(gx, gy)
        phase = np.exp(1j * sign * g.thetas)[None, None, :]
        vals = vals + phase[..., None] * np.einsum(
            "xyij,xytj->xyti", M, u.values)
    return FiberGridFn(grid=g, values=vals)


def star_conn_mult(scene, u: FiberGridFn) -> FiberGridFn:
    """Multiplication by ⋆A as a function on SM: ⋆(A_x, A_y) = (−A_y, A_x)."""
    g = u.grid
    gx, gy = g.meshgrid()
    em = np.exp(-scene.sigma_fn(gx, gy))
    Axm = scene.conn_x_fn(gx, gy)
    Aym = scene.conn_y_fn(gx, gy)
    c = np.cos(g.thetas)[None, None, :, None, None]
    s = np.sin(g.thetas)[None, None, :, None, None]
    M = em[:, :, None, None, None] * (-Aym[:, :, None] * c + Axm[:, :, None] * s)
    vals = np.einsum("xytij,xytj->xyti", M, u.values)
    halo = None
    if u.halo is not None:
        xs_pad = _pad_axis(g.xs)
        hx, hy = np.meshgrid(xs_pad, xs_pad, indexing="ij")
        em_h = np.exp(-scene.sigma_fn(hx, hy))
        Axh = scene.conn_x_fn(hx, hy)
        Ayh = scene.conn_y_fn(hx, hy)
        Mh = em_h[:, :, None, None, None] * (-Ayh[:, :, None] * c
                                             + Axh[:, :, None] * s)
        halo = np.einsum("xytij,xytj->xyti", Mh, u.halo)
    return FiberGridFn(grid=g, values=vals, halo=halo)


# -- evaluation at scattered phase points ------------------------------------

def eval_fiber_fn(u: FiberGridFn, x, y, theta, tol=1e-13):
    """Interpolate at phase points: bicubic in space × exact fiber synthesis.

    Mode coefficients below tol·max are dropped, so band-limited fields cost a
    handful of sparse products.
    """
    g = u.grid
    coeffs = fiber_modes(u.values)
    N = g.ntheta
    ks = np.fft.fftfreq(N, 1.0 / N).astype(int)
    mags = np.moveaxis(np.abs(coeffs), 2, 0).reshape(N, -1).max(axis=1)
    peak = mags.max()
    keep = np.where(mags > tol * peak)[0] if peak > 0 else []
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    theta = np.asarray(theta, dtype=float).ravel()
    P = nm.interp2d_matrix(g.xs, g.ys, x, y)
    out = np.zeros((x.size, u.n), dtype=complex)
    for m in keep:
        ck = P @ coeffs[:, :, m, :].reshape(g.nx * g.nx, u.n)
        out += ck * np.exp(1j * ks[m] * theta)[:, None]
    return out


# ---------------------------------------------------------------------------
# the commutator identity check

def commutator_residual(scene, u: ModeFn, nx=None):
    """Residual of [H, G + A + Φ]u = (X⊥ + ⋆A)u₀ + ((X⊥ + ⋆A)u)₀.

    Left side: exact mode algebra.  Right side: grid pipeline (4th-order
    stencils + FFT).  Returns sup/L² residual over the disk and the two sides.
    """
    # -- exact left side
    Tu = mf_transport_op(scene, u)
    lhs_sym = mf_add(mf_hilbert(Tu),
                     mf_transport_op(scene, mf_hilbert(u)), cv=-1.0)
    lhs = lhs_sym.to_grid(scene, nx)

    # -- grid right side
    ug = u.to_grid(scene, nx)
    g = ug.grid
    avg, havg = fiber_average(ug)
    u0 = FiberGridFn(grid=g,
                     values=np.repeat(avg[:, :, None, :], g.ntheta, axis=2),
                     halo=np.repeat(havg[:, :, None, :], g.ntheta, axis=2))
    t1 = gk_apply(scene, u0, "Xperp").values + star_conn_mult(scene, u0).values
    full = gk_apply(scene, ug, "Xperp").values + star_conn_mult(scene, ug).values
    t2 = full.mean(axis=2)
    rhs = t1 + t2[:, :, None, :]

    diff = lhs.values - rhs
    m = g.mask
    sup = float(np.abs(diff[m]).max())
    l2 = float(np.sqrt(geo.sm_inner(scene, diff, diff, nx).real))
    ref = max(float(np.abs(lhs.values[m]).max()), 1e-30)
    return {"sup": sup, "l2": l2, "sup_rel": sup / ref,
            "lhs": lhs, "rhs": FiberGridFn(grid=g, values=rhs)}
