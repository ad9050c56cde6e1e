import time

import numpy as np

import magray.adjoint as ad
import magray.calculus as ca
import magray.expressions as ex
import magray.flow as flow
import magray.geometry as geo
import magray.harmonics as hm
import magray.scene as sc
import magray.transport as transport

t0 = time.time()
eu = sc.builtin_scene("euclidean", nx=48, ntheta=48, ns=48, nphi=24)
bg = geo.boundary_grid(eu)

# (a) h ≡ 1 on euclidean: (I0)* h = 2π e^0... expectation: U=Id, w_psi ≡ 1,
#     mode0 = 1 → f = 2π; modes ±1 = 0 → omega = 0
w = np.ones((bg.ns, bg.nphi, 1), dtype=complex)
res = ad.adjoint_transform(eu, w, which="both")
print("const-data f max dev from 2pi:",
      np.abs(res.f_part - 2 * np.pi).max())
print("const-data omega sup:", np.abs(res.omega_part.ax).max(),
      np.abs(res.omega_part.ay).max())

# (b) order-1: FFT route vs explicit fiber integral
rng = np.random.default_rng(7)
S, P = np.meshgrid(bg.s, bg.phi, indexing="ij")
h = (np.cos(S) * np.sin(2 * P) + 0.3 * np.sin(3 * S + 1.0) * np.cos(P)
     + 0.2j * np.cos(2 * S - 0.5))[..., None] * np.cos(P)[..., None]
o1 = ad.adjoint_transform(eu, h, which="order1")
o2 = ad.order1_fiber_integral(eu, h)
dev = max(np.abs(o1.ax - o2.ax).max(), np.abs(o1.ay - o2.ay).max())
print("order1 two-route dev:", dev)

# (c) pairing gaps on two scenes
x, y = ex.Var("x"), ex.Var("y")
env = (1 - x * x - y * y)
for name in ("euclidean", "magnetic", "attenuated2"):
    scn = sc.builtin_scene(name, nx=48, ntheta=48, ns=48, nphi=24)
    slot = tuple(env * (x + 0.3 * (j + 1)) for j in range(scn.n))
    f0 = ca.tensor_to_fn(scn, (slot,), order=0)
    gap0 = ad.pairing_gap(scn, 0, f0, h[..., :1] if scn.n == 1 else
                          np.repeat(h, scn.n, axis=-1))
    alpha = ca.oneform((env * y,), (env * (x * x - 0.2),), n=scn.n and 1)
    if scn.n == 1:
        alpha = ca.oneform((env * y,), (env * (x * x - 0.2),))
        hh = h
    else:
        alpha = ca.oneform((env * y, ex.const(0.5) * env * x),
                           (env * (x * x - 0.2), env * y * x))
        hh = np.repeat(h, scn.n, axis=-1)
    gap1 = ad.pairing_gap(scn, 1, alpha, hh)
    print(f"{name}: pairing gap k=0 {gap0:.3e}  k=1 {gap1:.3e}")

# (d) fast path vs reference ray transform
scn = sc.builtin_scene("attenuated2", nx=48, ntheta=48, ns=48, nphi=24)
g = geo.sm_grid(scn)
xm, ym = ca._masked_nodes(g)
c0 = ((1 - xm**2 - ym**2) ** 2 * (xm + 0.2j * ym))[:, None]
c0 = np.concatenate([c0, 0.3 * c0[::1] * (ym + 0.1)[:, None]], axis=1)
t1 = time.time()
d_fast = ad.ray_transform_modes(scn, {0: c0})
t2 = time.time()
u = ca.grid_function_fiber_fn(scn, c0)
d_ref = transport.ray_transform(scn, u)
t3 = time.time()
print("fast-vs-ref I0:", np.abs(d_fast - d_ref).max(),
      f"fast {t2-t1:.3f}s ref {t3-t2:.3f}s")

# (e) probe amplitudes on euclidean: N00 symbol 2pi/|xi| → ratio 2; 11/00 → 1/2
t4 = time.time()
for nx, ns in ((48, 96), (64, 128)):
    pr = sc.builtin_scene("euclidean", nx=nx, ntheta=nx, ns=ns, nphi=ns // 2)
    a1 = ad.normal_probe(pr, (12.0, 0.0), "00")
    a2 = ad.normal_probe(pr, (24.0, 0.0), "00")
    a11 = ad.normal_probe(pr, (12.0, 0.0), "11")
    a01 = ad.normal_probe(pr, (12.0, 0.0), "01")
    a10 = ad.normal_probe(pr, (12.0, 0.0), "10")
    print(f"nx={nx}: 00(k)/00(2k) {a1['amplitude']/a2['amplitude']:.4f}  "
          f"11/00 {a11['amplitude']/a1['amplitude']:.4f}  "
          f"offdiag {a01['amplitude']/a1['amplitude']:.2e} "
          f"{a10['amplitude']/a1['amplitude']:.2e}")
print(f"probe batch {time.time()-t4:.1f}s   total {time.time()-t0:.1f}s")
