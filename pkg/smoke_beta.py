import numpy as np, time
from magray import scene as sc, expressions as ex, calculus as ca, geometry as geo

P = ex.parse
flat = sc.builtin_scene("euclidean")

# oracle: f = 2, Phi = 0 -> beta with star d beta = 2, d* beta = 0;
# the canonical -y dx + x dy solves it (ours may differ by a gauge term but
# must satisfy the constraints).
t0 = time.time()
bs = ca.solve_beta(flat, ex.const(2.0), ex.ZERO)
print(f"solve_beta flat f=2: res_star={bs.residual_star:.3e} res_div={bs.residual_div:.3e} [{time.time()-t0:.2f}s]")
g = bs.grid
xm, ym = ca._masked_nodes(g)
print("  |beta - (-y dx + x dy)| =", np.abs(bs.beta.ax[:,0] + ym).max(), np.abs(bs.beta.ay[:,0] - xm).max())

# curved metric + nonzero Higgs, n=1: random smooth f, a
att = sc.builtin_scene("attenuated")
print("attenuated: conn zero?", att.conn_is_zero, " higgs zero?", att.higgs_is_zero)
som = sc.builtin_scene("conformal-magnetic")
# give it a Higgs field but keep A = 0 (beta path must stay direct)
n = som.n
z = ex.ZERO
phi = ((P("i*(0.8 + 0.3*x)"),),)
som2 = som.with_attenuation(((z,),), ((z,),), phi)
print("som2 conn zero?", som2.conn_is_zero, "higgs zero?", som2.higgs_is_zero)
fe = P("(0.4 + x - 0.2*y)*(1 - 0.5*x*x)")
ae = P("(0.3 - y + 0.15*x*y)")
bs2 = ca.solve_beta(som2, fe, ae)
print(f"solve_beta curved+Higgs: res_star={bs2.residual_star:.3e} res_div={bs2.residual_div:.3e}")

# cross-check constraints on the scene grid with independent halo-FD route
sd = ca.star_dA(som2, bs2.beta)          # grid route
fv = ex.compile_expr(fe, force_complex=True)(xm, ym)[:, None]
r_in = np.hypot(xm, ym)
inner = r_in < 0.85
err = np.abs(sd - fv)[inner].max()
print(f"  halo-FD cross-check (r<0.85): |star dA beta - f| = {err:.3e}")
dv = ca.d_A_star(som2, bs2.beta)
pm = np.asarray(som2.higgs_fn(xm, ym))
av = ex.compile_expr(ae, force_complex=True)(xm, ym)[:, None]
tgt = 2.0 * np.einsum("pij,pj->pi", pm, av)
print(f"  halo-FD cross-check (r<0.85): |d_A* beta - 2 Phi a| = {np.abs(dv - tgt)[inner].max():.3e}")
