"""Frames, measures, grids and boundary parametrizations on the disk.

Working in the isothermal trivialization of the circle bundle SM: a phase point
is (x, y, θ) with unit tangent v = e^{-σ}(cosθ, sinθ) (the angle θ is Euclidean;
the g-norm of v is 1).  The generating frame is

    X   = e^{-σ}( cosθ ∂x + sinθ ∂y + (−σ_x sinθ + σ_y cosθ) ∂θ )   geodesic spray
    V   = ∂θ                                                        fiber rotation
    X⊥  = e^{-σ}( sinθ ∂x − cosθ ∂y + ( σ_x cosθ + σ_y sinθ) ∂θ )

with bracket relations [V, X] = −X⊥, [V, X⊥] = X, [X, X⊥] = −K V (K = Gaussian
curvature).  The sign of X⊥ is fixed so that (X + iX⊥)/2 raises the fiber
frequency; equivalently X⊥ f = ⋆df for functions with the orientation ⋆dx = dy.
The magnetic generator is G = X + λV, whose Lorentz force is w ↦ λ·(rotation of
w by +π/2).

Boundary parametrizations on the rim point x(s) = (cos s, sin s):

* inflow ∂₊SM:  θ = s + π + φ with φ ∈ [−π/2, π/2] the angle from the inward
  normal; the inflow measure is dμ = cos φ · e^{σ(x(s))} ds dφ;
* outflow ∂₋SM: θ = s + φ' with φ' ∈ [−π/2, π/2] measured from the outward
  normal;
* full fiber over a rim point: θ = s + π + a with a ∈ [−π, π); |a| < π/2 is the
  inflow part.  The discrete fiber angles are staggered (offset half a cell) so
  no node sits exactly on the tangential directions a = ±π/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TWO_PI", "wrap_angle", "frame_coefficients", "generator_coefficients",
    "lorentz", "unit_velocity", "inflow_to_phase", "fiber_to_phase",
    "phase_to_rim_coords", "outflow_to_fiber_angle", "fiber_angle_to_outflow",
    "SMGrid", "sm_grid", "BoundaryGrid", "boundary_grid",
    "mu_weights", "disk_area_weights", "mu_inner", "disk_inner", "sm_inner",
    "oneform_inner", "star_oneform", "convexity_margin", "gauss_curvature",
]

TWO_PI = 2.0 * np.pi


def wrap_angle(t):
    """Wrap to [−π, π)."""
    return (np.asarray(t) + np.pi) % TWO_PI - np.pi


# ---------------------------------------------------------------------------
# frames

def frame_coefficients(scene, x, y, theta):
    """Coefficient triples (∂x, ∂y, ∂θ) of X and X⊥ at the given phase points."""
    em = np.exp(-scene.sigma_fn(x, y))
    sx = scene.sigma_x_fn(x, y)
    sy = scene.sigma_y_fn(x, y)
    c, s = np.cos(theta), np.sin(theta)
    X = (em * c, em * s, em * (-sx * s + sy * c))
    Xp = (em * s, -em * c, em * (sx * c + sy * s))
    return X, Xp


def generator_coefficients(scene, x, y, theta):
    """Coefficients of the magnetic generator G = X + λV."""
    (ax, ay, ath), _ = frame_coefficients(scene, x, y, theta)
    return ax, ay, ath + scene.lam_fn(x, y)


def unit_velocity(scene, x, y, theta):
    """Coordinate components of the g-unit velocity e^{-σ}(cosθ, sinθ)."""
    em = np.exp(-scene.sigma_fn(x, y))
    return em * np.cos(theta), em * np.sin(theta)


def lorentz(scene, x, y, vx, vy):
    """Lorentz force Y(w) = λ · (w rotated by +π/2), coordinate components."""
    lam = scene.lam_fn(x, y)
    return -lam * np.asarray(vy), lam * np.asarray(vx)


# ---------------------------------------------------------------------------
# boundary parametrizations

def inflow_to_phase(s, phi):
    """∂₊SM chart (s, φ) → (x, y, θ)."""
    s = np.asarray(s, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return np.cos(s), np.sin(s), s + np.pi + phi


def fiber_to_phase(s, a):
    """Full-fiber chart over the rim: same formula, a ranges over [−π, π)."""
    return inflow_to_phase(s, a)


def phase_to_rim_coords(x, y, theta):
    """Phase point on the rim → (s, a) with a the angle from the inward normal."""
    s = np.mod(np.arctan2(y, x), TWO_PI)
    return s, wrap_angle(theta - s - np.pi)


def outflow_to_fiber_angle(phi_out):
    """∂₋ chart angle φ' (from outward normal) → full-fiber angle a."""
    return wrap_angle(np.asarray(phi_out) + np.pi)


def fiber_angle_to_outflow(a):
    """Full-fiber angle a (|a| > π/2) → outflow chart angle φ' ∈ [−π/2, π/2]."""
    return wrap_angle(np.asarray(a) + np.pi)


# ---------------------------------------------------------------------------
# grids

@dataclass(frozen=True, eq=False)
class SMGrid:
    """Tensor grid for functions on SM: uniform square × uniform fiber angles."""

    xs: np.ndarray          # (nx,)
    ys: np.ndarray          # (nx,)
    thetas: np.ndarray      # (ntheta,) uniform on [0, 2π)
    mask: np.ndarray        # (nx, nx) closed-disk membership, indexing (ix, iy)
    h: float

    @property
    def nx(self):
        return self.xs.size

    @property
    def ntheta(self):
        return self.thetas.size

    def meshgrid(self):
        return np.meshgrid(self.xs, self.ys, indexing="ij")


def sm_grid(scene, nx=None) -> SMGrid:
    nx = nx or scene.nx
    key = ("sm_grid", nx)
    if key not in scene._cache:
        xs = np.linspace(-1.0, 1.0, nx)
        thetas = np.arange(scene.ntheta) * (TWO_PI / scene.ntheta)
        gx, gy = np.meshgrid(xs, xs, indexing="ij")
        mask = gx**2 + gy**2 <= 1.0 + 1e-12
        scene._cache[key] = SMGrid(xs=xs, ys=xs.copy(), thetas=thetas,
                                   mask=mask, h=float(xs[1] - xs[0]))
    return scene._cache[key]


@dataclass(frozen=True, eq=False)
class BoundaryGrid:
    """Rim-fiber grids: inflow chart (s × Gauss–Legendre φ) and full fiber."""

    s: np.ndarray        # (ns,) uniform on [0, 2π)
    phi: np.ndarray      # (nphi,) Gauss–Legendre nodes on (−π/2, π/2)
    phi_w: np.ndarray    # (nphi,) matching weights
    a: np.ndarray        # (ntheta,) staggered uniform fiber angles in (−π, π)
    ds: float

    @property
    def ns(self):
        return self.s.size

    @property
    def nphi(self):
        return self.phi.size


def boundary_grid(scene) -> BoundaryGrid:
    key = "boundary_grid"
    if key not in scene._cache:
        s = np.arange(scene.ns) * (TWO_PI / scene.ns)
        nodes, wts = np.polynomial.legendre.leggauss(scene.nphi)
        phi = 0.5 * np.pi * nodes
        phi_w = 0.5 * np.pi * wts
        a = -np.pi + (np.arange(scene.ntheta) + 0.5) * (TWO_PI / scene.ntheta)
        scene._cache[key] = BoundaryGrid(s=s, phi=phi, phi_w=phi_w, a=a,
                                         ds=TWO_PI / scene.ns)
    return scene._cache[key]


# ---------------------------------------------------------------------------
# measures and inner products

def mu_weights(scene) -> np.ndarray:
    """Quadrature weights for dμ = cos φ e^{σ} ds dφ on the (s, φ) inflow grid."""
    bg = boundary_grid(scene)
    rim = scene.metric_factor(np.cos(bg.s), np.sin(bg.s))
    return (rim * bg.ds)[:, None] * (np.cos(bg.phi) * bg.phi_w)[None, :]


def disk_area_weights(scene, nx=None) -> np.ndarray:
    """Masked Riemann weights for dVol_g = e^{2σ} dx dy on the square grid."""
    g = sm_grid(scene, nx)
    gx, gy = g.meshgrid()
    w = np.exp(2.0 * scene.sigma_fn(gx, gy)) * g.h**2
    return np.where(g.mask, w, 0.0)


def mu_inner(scene, f, g):
    """⟨f, g⟩ in L²(∂₊SM, dμ) for arrays on the (ns, nphi) grid."""
    w = mu_weights(scene)
    return complex(np.sum(np.conj(f) * g * _expand(w, f)))


def disk_inner(scene, f, g, nx=None):
    """⟨f, g⟩ in L²(M, dVol_g); trailing component axes are summed."""
    w = disk_area_weights(scene, nx)
    return complex(np.sum(np.conj(f) * g * _expand(w, f)))


def sm_inner(scene, u, v, nx=None):
    """⟨u, v⟩ in L²(SM, dΣ³), dΣ³ = e^{2σ} dx dy dθ, grid (nx, nx, ntheta, ...)."""
    w = disk_area_weights(scene, nx)[:, :, None]
    dtheta = TWO_PI / scene.ntheta
    return complex(np.sum(np.conj(u) * v * _expand(w, u)) * dtheta)


def oneform_inner(scene, ax, ay, bx, by, nx=None):
    """L² product of 1-forms; the e^{-2σ} fiber metric cancels the area factor."""
    g = sm_grid(scene, nx)
    w = np.where(g.mask, g.h**2, 0.0)
    tot = np.sum(np.conj(ax) * bx * _expand(w, ax)) + \
        np.sum(np.conj(ay) * by * _expand(w, ay))
    return complex(tot)


def _expand(w, ref):
    """Right-pad weight array with singleton axes to broadcast over components."""
    extra = np.ndim(ref) - w.ndim
    return w.reshape(w.shape + (1,) * extra) if extra > 0 else w


# ---------------------------------------------------------------------------
# pointwise Hodge star and curvature

def star_oneform(ax, ay):
    """⋆(αx dx + αy dy) = −αy dx + αx dy; conformally invariant on 1-forms."""
    return -np.asarray(ay), np.asarray(ax)


def gauss_curvature(scene, x, y):
    """K = −e^{-2σ} Δσ, computed from the symbolic second derivatives of σ."""
    from . import expressions as ex
    key = "gauss_curvature_fns"
    if key not in scene._cache:
        sxx = ex.diff(scene.sigma_x, "x")
        syy = ex.diff(scene.sigma_y, "y")
        scene._cache[key] = (ex.compile_expr(sxx), ex.compile_expr(syy))
    fxx, fyy = scene._cache[key]
    return -np.exp(-2.0 * scene.sigma_fn(x, y)) * (fxx(x, y) + fyy(x, y))


def convexity_margin(scene, s):
    """Magnetic convexity margin at rim points x(s), minimized over ±ξ.

    The rim's geodesic curvature for g = e^{2σ}δ is Λ = e^{-σ}(1 + ∂_r σ) and
    the magnetic term contributes ⟨Y(±ξ), ν⟩ = ±λ, so the margin is Λ − |λ|.
    """
    x, y = np.cos(s), np.sin(s)
    dr_sigma = x * scene.sigma_x_fn(x, y) + y * scene.sigma_y_fn(x, y)
    lam = scene.lam_fn(x, y)
    big_lambda = np.exp(-scene.sigma_fn(x, y)) * (1.0 + dr_sigma)
    return big_lambda, big_lambda - np.abs(lam)
