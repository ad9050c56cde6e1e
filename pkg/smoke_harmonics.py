import time
import numpy as np

import magray.expressions as ex
import magray.geometry as geo
import magray.harmonics as hm
import magray.numerics as nm
from magray.scene import builtin_scene

rng = np.random.default_rng(7)

# ---- numerics -------------------------------------------------------------
print("== numerics ==")
w = nm.fornberg_weights(0.0, np.array([-2., -1., 0., 1., 2.]), 1)
print("fornberg fd4:", np.abs(w - np.array([1, -8, 0, 8, -1]) / 12.0).max())

xs = np.linspace(-1, 1, 41)
xq = rng.uniform(-0.9, 0.9, 200)
P = nm.interp_matrix_1d(xs, xq)
err = np.abs(P @ np.sin(3 * xs) - np.sin(3 * xq)).max()
print("interp1d uniform err:", err)

th = np.arange(32) * (2 * np.pi / 32)
tq = rng.uniform(0, 2 * np.pi, 200)
Pp = nm.interp_matrix_1d(th, tq, periodic=2 * np.pi)
errp = np.abs(Pp @ np.cos(2 * th + 0.3) - np.cos(2 * tq + 0.3)).max()
print("interp1d periodic err:", errp)

ys = np.linspace(-1, 1, 41)
xq2 = rng.uniform(-0.9, 0.9, 300); yq2 = rng.uniform(-0.9, 0.9, 300)
P2 = nm.interp2d_matrix(xs, ys, xq2, yq2)
gx, gy = np.meshgrid(xs, ys, indexing="ij")
f = np.exp(0.3 * gx) * np.sin(2 * gy)
fq = np.exp(0.3 * xq2) * np.sin(2 * yq2)
print("interp2d err:", np.abs(P2 @ f.ravel() - fq).max())

tq3 = rng.uniform(0, 2 * np.pi, 300)
P3 = nm.interp3d_matrix(xs, ys, th, xq2, yq2, tq3, periodic3=2 * np.pi)
F3 = f[:, :, None] * np.cos(th)[None, None, :]
fq3 = fq * np.cos(tq3)
print("interp3d err:", np.abs(P3 @ F3.ravel() - fq3).max())

# halo extrapolation accuracy for a smooth global function
nx = 64
xs64 = np.linspace(-1, 1, nx)
h = xs64[1] - xs64[0]
xs_pad = np.concatenate([[xs64[0] - 2 * h, xs64[0] - h], xs64,
                         [xs64[-1] + h, xs64[-1] + 2 * h]])
H = nm.halo_matrix(xs_pad)
hx, hy = np.meshgrid(xs_pad, xs_pad, indexing="ij")
fg = np.exp(0.4 * hx) * np.cos(1.5 * hy)
fin = np.where(hx**2 + hy**2 <= 1 + 1e-12, fg, 0.0)
fext = (H @ fin.reshape(-1, 1)).reshape(fg.shape)
band = (hx**2 + hy**2 > 1 + 1e-12) & (np.sqrt(hx**2 + hy**2) < 1 + 3 * h)
print("halo extrap err (3h band):", np.abs(fext - fg)[band].max())

# masked FD on the disk
mask = hx[2:-2, 2:-2]**2 + hy[2:-2, 2:-2]**2 <= 1 + 1e-12
Dx = nm.fd_matrix_masked(xs64, mask, axis=0)
fm = (np.exp(0.4 * hx) * np.cos(1.5 * hy))[2:-2, 2:-2][mask]
dfm = (0.4 * np.exp(0.4 * hx) * np.cos(1.5 * hy))[2:-2, 2:-2][mask]
print("masked fd4 err:", np.abs(Dx @ fm - dfm).max())

# cgne vs lstsq
A = rng.normal(size=(40, 18))
b = rng.normal(size=40)
x, rr, it, _ = nm.cgne(lambda v: A @ v, lambda v: A.T @ v, b, rtol=1e-12,
                       maxiter=400)
xref = np.linalg.lstsq(A, b, rcond=None)[0]
print("cgne vs lstsq:", np.abs(x - xref).max(), "iters", it)

# ---- harmonics ------------------------------------------------------------
print("== harmonics ==")
sc = builtin_scene("conformal-magnetic", nx=48, ntheta=32)

# polynomial ModeFn: grid X/Xperp must agree with symbolic to machine eps
px = ex.parse("0.3 + x*y - 0.5*x^2")
py = ex.parse("y - 0.2*x*y^2")
u = hm.ModeFn(n=1, modes={0: (px,), 2: (py,), -1: (ex.parse("x+0.1"),)})
ug = u.to_grid(sc)
for which, sym in [("X", hm.mf_apply_X(sc, u)),
                   ("Xperp", hm.mf_apply_Xperp(sc, u)),
                   ("G", hm.mf_apply_generator(sc, u))]:
    gridv = hm.gk_apply(sc, ug, which).values
    symv = sym.to_grid(sc).values
    m = ug.grid.mask
    print(f"grid-vs-symbolic {which}:", np.abs((gridv - symv)[m]).max())

# eta mode leakage (grid route): modes other than k±1 must be roundoff
one = hm.ModeFn(n=1, modes={3: (ex.parse("x^2 - y"),)})
eg = hm.gk_apply(sc, one.to_grid(sc), "eta+")
cf = hm.fiber_modes(eg.values)
ks = np.fft.fftfreq(32, 1 / 32).astype(int)
leak = max(np.abs(cf[:, :, i]).max() for i in range(32) if ks[i] != 4)
print("eta+ leakage:", leak, " signal:", np.abs(hm.mode_coefficient(cf, 4)).max())

# Hilbert: H^2 = -Id + P0
vals = rng.normal(size=(8, 8, 32, 2)) + 1j * rng.normal(size=(8, 8, 32, 2))
h2 = hm.hilbert_samples(hm.hilbert_samples(vals))
p0 = hm.fiber_modes(vals)[:, :, :1, :] * 0 + vals.mean(axis=2, keepdims=True)
print("H^2 + Id - P0:", np.abs(h2 + vals - p0).max())

# Parseval: sm_inner vs 2π Σ_k disk_inner(c_k)
uv = u.to_grid(sc).values
lhsP = geo.sm_inner(sc, uv, uv)
cfs = hm.fiber_modes(uv)
rhsP = 2 * np.pi * sum(geo.disk_inner(sc, cfs[:, :, i], cfs[:, :, i])
                       for i in range(32))
print("parseval rel:", abs(lhsP - rhsP) / abs(lhsP))

# commutator: flat scene + poly u -> machine;
flat = builtin_scene("euclidean", nx=48, ntheta=32)
res0 = hm.commutator_residual(flat, u)
print("commutator flat/poly sup:", res0["sup"])

# attenuated scene, smooth non-poly u: 4th-order shrink 32 -> 64
sca = builtin_scene("attenuated", ntheta=32)
ufn = hm.ModeFn(n=1, modes={0: (ex.parse("exp(0.3*x)*sin(y)"),),
                            1: (ex.parse("cos(x+0.2*y)"),),
                            -2: (ex.parse("x*exp(-0.5*y)"),)})
t0 = time.time()
r32 = hm.commutator_residual(sca, ufn, nx=33)
r64 = hm.commutator_residual(sca, ufn, nx=65)
print("commutator att sup 33/65:", r32["sup"], r64["sup"],
      " ratio:", r32["sup"] / r64["sup"], f" ({time.time()-t0:.2f}s)")

# n=2 scene sanity
sc2 = builtin_scene("attenuated2", nx=40, ntheta=32)
u2 = hm.ModeFn(n=2, modes={0: (ex.parse("x"), ex.parse("y^2")),
                           1: (ex.parse("0.5"), ex.parse("x*y"))})
r2 = hm.commutator_residual(sc2, u2)
print("commutator n=2 sup (poly, curved):", r2["sup"], "rel:", r2["sup_rel"])

# eval_fiber_fn accuracy
pts = rng.uniform(-0.6, 0.6, (50, 2))
thq = rng.uniform(0, 2 * np.pi, 50)
ev = hm.eval_fiber_fn(u.to_grid(sc), pts[:, 0], pts[:, 1], thq)
ex_v = u.evaluate(pts[:, 0], pts[:, 1], thq)
print("eval_fiber_fn err:", np.abs(ev - ex_v).max())
