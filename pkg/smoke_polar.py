import numpy as np, time
from magray import scene as sc, expressions as ex, calculus as ca, geometry as geo

P = ex.parse

# --- twist ------------------------------------------------------------------
for name in ("euclidean", "conformal-magnetic", "attenuated2"):
    s = sc.builtin_scene(name)
    tw = ca.twist(s, 1)
    print(f"twist[{name}] n={s.n} identity residual {tw.identity_residual:.3e}")
flat = sc.builtin_scene("euclidean")
tw = ca.twist(flat, 2)
print("flat A_h zero?", all(ex.expr_is_zero(tw.Ah[0][i][j]) and ex.expr_is_zero(tw.Ah[1][i][j])
      for i in range(1) for j in range(1)), " Phi_l:", ex.format_expr(tw.Phi_lam[0][0]))

# --- decompose: exact-form case  (alpha = df, f|rim = 0 -> p = f, a = const) --
conf = sc.builtin_scene("conformal-magnetic")    # sigma != 0, A = 0
fe = P("(1 - x*x - y*y)*(x + 0.3*y*y + 0.4)")
al = ca.d_A(conf, (fe,))    # A=0: df
t0 = time.time()
dec = ca.decompose_one_form(conf, al)
g = dec.grid
xm, ym = ca._masked_nodes(g)
fv = ex.compile_expr(fe, force_complex=True)(xm, ym)[:, None]
perr = np.abs(dec.p - fv).max()
aa = dec.a - dec.a.mean()
print(f"decompose(df): residual={dec.residual:.3e}  |p-f|={perr:.3e}  |a-const|={np.abs(aa).max():.3e}  [{time.time()-t0:.2f}s]")

# --- decompose: co-exact case (flat: alpha = star dg -> p ~ 0, a ~ g) --------
ge = P("x*y + 0.2*x - 0.1")
alc = ca.star_dA(flat, (ge,))
dec2 = ca.decompose_one_form(flat, alc)
gm = ex.compile_expr(ge, force_complex=True)(xm, ym)[:, None]
print(f"decompose(star dg): residual={dec2.residual:.3e}  |p|={np.abs(dec2.p).max():.3e}  |a-g-const|={np.abs((dec2.a - gm) - (dec2.a - gm).mean()).max():.3e}")

# --- decompose: random smooth alpha, curved metric ---------------------------
rng = np.random.default_rng(7)
def rand_poly(rng, deg=3, scale=0.7):
    e = ex.ZERO
    for i in range(deg + 1):
        for j in range(deg + 1 - i):
            c = rng.standard_normal() * scale / (1 + i + j)
            e = e + ex.const(c) * P("x")**0 * ex.parse(f"(x^{i})*(y^{j})") if False else e + ex.const(c) * ex.parse(f"x^{i} * y^{j}")
    return e
a_r = ca.oneform(rand_poly(rng), rand_poly(rng))
dec3 = ca.decompose_one_form(conf, a_r)
print(f"decompose(random, curved): residual={dec3.residual:.3e}")

# orthogonality (A=0 classical): <dp, star da> flat inner
tot = np.vdot(dec3.dp.ax, dec3.sda.ax) + np.vdot(dec3.dp.ay, dec3.sda.ay)
na = np.sqrt((np.abs(dec3.dp.ax)**2 + np.abs(dec3.dp.ay)**2).sum())
nb = np.sqrt((np.abs(dec3.sda.ax)**2 + np.abs(dec3.sda.ay)**2).sum())
print(f"orthogonality cos = {abs(tot)/(na*nb):.3e}")
