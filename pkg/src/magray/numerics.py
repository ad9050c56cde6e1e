"""Shared numerical kernels: stencils, local interpolation, halo extension, CGNE.

Interpolation is local 4-point Lagrange (cubic) per axis, assembled as sparse
matrices.  Locality keeps every interpolation step exactly transposable, which
the adjoint-solver needs (it runs conjugate gradient with the *discrete* adjoint
of the interpolation chain rather than an approximately-adjoint formula).

Fields that live only on the closed disk are extended a two-cell halo past the
rim by cubic extrapolation along each outward ray, sampling the interior field
at four radii chosen so their bicubic windows stay strictly inside the disk.
The extension is a cached sparse operator per grid, so applying it is one
matrix-vector product.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import SolverStalled

__all__ = [
    "fornberg_weights", "fd4_kernel", "apply_fd4_halo",
    "lagrange_windows_uniform", "lagrange_windows_periodic",
    "lagrange_windows_nonuniform", "interp_matrix_1d", "interp2d_matrix",
    "interp3d_matrix", "halo_matrix", "fd_matrix_masked", "cgne",
]


# ---------------------------------------------------------------------------
# finite-difference stencils

def fornberg_weights(z, xs, m):
    """Weights of the order-m derivative at z from nodes xs (Fornberg 1988)."""
    xs = np.asarray(xs, dtype=float)
    n = xs.size
    w = np.zeros((m + 1, n))
    w[0, 0] = 1.0
    c1 = 1.0
    c4 = xs[0] - z
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = xs[i] - z
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    w[k, i] = c1 * (k * w[k - 1, i - 1]
                                    - c5 * w[k, i - 1]) / c2
                w[0, i] = -c1 * c5 * w[0, i - 1] / c2
            for k in range(mn, 0, -1):
                w[k, j] = ((c4 * w[k, j] - k * w[k - 1, j]) / c3)
            w[0, j] = c4 * w[0, j] / c3
        c1 = c2
    return w[m]


def fd4_kernel(h):
    """Classic 5-point 4th-order first-derivative kernel."""
    return np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12.0 * h)


def apply_fd4_halo(vals_halo, h, axis):
    """4th-order central derivative of a halo-padded array.

    ``vals_halo`` has two extra cells on each end of ``axis``; the output drops
    them, so every returned node uses a full central stencil.
    """
    k = fd4_kernel(h)
    v = np.moveaxis(vals_halo, axis, 0)
    out = (k[0] * v[:-4] + k[1] * v[1:-3] + k[3] * v[3:-1] + k[4] * v[4:])
    return np.moveaxis(out, 0, axis)


# ---------------------------------------------------------------------------
# local Lagrange interpolation

def _lagrange_rowwise(tz, zw):
    """Weights (T, K) for targets tz against per-target node windows zw (T, K)."""
    T, K = zw.shape
    w = np.ones((T, K))
    for i_ in range(K):
        for j_ in range(K):
            if i_ == j_:
                continue
            w[:, i_] *= (tz - zw[:, j_]) / (zw[:, i_] - zw[:, j_])
    return w


def lagrange_windows_uniform(nodes, t, K=4):
    """K-node windows and weights on a uniform non-periodic axis (edges shift)."""
    nodes = np.asarray(nodes, dtype=float)
    t = np.asarray(t, dtype=float).ravel()
    h = nodes[1] - nodes[0]
    base = np.clip(np.floor((t - nodes[0]) / h).astype(int) - (K // 2 - 1),
                   0, nodes.size - K)
    cols = base[:, None] + np.arange(K)[None, :]
    return cols, _lagrange_rowwise(t, nodes[cols])


def lagrange_windows_periodic(nodes, t, period, K=4):
    """K-node windows on a uniform periodic axis; columns wrap modulo N."""
    nodes = np.asarray(nodes, dtype=float)
    t = np.asarray(t, dtype=float).ravel()
    N = nodes.size
    h = period / N
    j = np.floor((t - nodes[0]) / h).astype(int)
    cols_raw = j[:, None] + np.arange(1 - K // 2, K // 2 + 1)[None, :]
    # unwrapped node positions so the Lagrange weights see monotone abscissae
    zw = nodes[0] + cols_raw * h
    return np.mod(cols_raw, N), _lagrange_rowwise(t, zw)


def lagrange_windows_nonuniform(nodes, t, K=4):
    """K-node windows on a sorted non-uniform axis (clamped at the ends)."""
    nodes = np.asarray(nodes, dtype=float)
    t = np.asarray(t, dtype=float).ravel()
    base = np.clip(np.searchsorted(nodes, t) - K // 2, 0, nodes.size - K)
    cols = base[:, None] + np.arange(K)[None, :]
    return cols, _lagrange_rowwise(t, nodes[cols])


def _windows(nodes, t, periodic, K=4):
    if periodic is not None:
        return lagrange_windows_periodic(nodes, t, periodic, K)
    nodes = np.asarray(nodes, dtype=float)
    if nodes.size > 2 and np.allclose(np.diff(nodes), nodes[1] - nodes[0],
                                      rtol=1e-10, atol=1e-12):
        return lagrange_windows_uniform(nodes, t, K)
    return lagrange_windows_nonuniform(nodes, t, K)


def interp_matrix_1d(nodes, t, periodic=None, order=4) -> sp.csr_matrix:
    cols, w = _windows(nodes, t, periodic, order)
    T = cols.shape[0]
    rows = np.repeat(np.arange(T), order)
    return sp.csr_matrix((w.ravel(), (rows, cols.ravel())),
                         shape=(T, np.asarray(nodes).size))


def interp2d_matrix(nodes1, nodes2, t1, t2, periodic1=None, periodic2=None,
                    order=4) -> sp.csr_matrix:
    """Rows interpolate a flattened (N1, N2) C-order array at (t1, t2) points."""
    c1, w1 = _windows(nodes1, t1, periodic1, order)
    c2, w2 = _windows(nodes2, t2, periodic2, order)
    T = c1.shape[0]
    K2 = order * order
    N2 = np.asarray(nodes2).size
    cols = (c1[:, :, None] * N2 + c2[:, None, :]).reshape(T, K2)
    data = (w1[:, :, None] * w2[:, None, :]).reshape(T, K2)
    rows = np.repeat(np.arange(T), K2)
    return sp.csr_matrix((data.ravel(), (rows, cols.ravel())),
                         shape=(T, np.asarray(nodes1).size * N2))


def interp3d_matrix(nodes1, nodes2, nodes3, t1, t2, t3,
                    periodic3=None) -> sp.csr_matrix:
    """Tensor interpolation for (N1, N2, N3) arrays (third axis may wrap)."""
    c1, w1 = _windows(nodes1, t1, None)
    c2, w2 = _windows(nodes2, t2, None)
    c3, w3 = _windows(nodes3, t3, periodic3)
    T = c1.shape[0]
    N2, N3 = np.asarray(nodes2).size, np.asarray(nodes3).size
    cols = ((c1[:, :, None, None] * N2 + c2[:, None, :, None]) * N3
            + c3[:, None, None, :]).reshape(T, 64)
    data = (w1[:, :, None, None] * w2[:, None, :, None]
            * w3[:, None, None, :]).reshape(T, 64)
    rows = np.repeat(np.arange(T), 64)
    return sp.csr_matrix((data.ravel(), (rows, cols.ravel())),
                         shape=(T, np.asarray(nodes1).size * N2 * N3))


# ---------------------------------------------------------------------------
# halo extension past the rim

def halo_matrix(xs_pad) -> sp.csr_matrix:
    """Sparse operator filling outside-disk nodes of a padded square grid.

    Rows for nodes with x²+y² ≤ 1 copy the node; rows for outside nodes take a
    cubic extrapolation in radius along the node's outward ray, with the four
    sample radii inset so each bicubic stencil reads only interior nodes.
    """
    xs_pad = np.asarray(xs_pad, dtype=float)
    h = xs_pad[1] - xs_pad[0]
    N = xs_pad.size
    gx, gy = np.meshgrid(xs_pad, xs_pad, indexing="ij")
    r = np.hypot(gx, gy).ravel()
    inside = r <= 1.0
    idx_out = np.where(~inside)[0]

    # sample radii inset 3h: a bicubic window reaches at most 2√2·h ≈ 2.83h
    # diagonally from its target, so every stencil node stays inside the rim
    rho = 1.0 - (3.0 + 1.2 * np.arange(4)) * h
    ux = (gx.ravel()[idx_out] / r[idx_out])
    uy = (gy.ravel()[idx_out] / r[idx_out])
    samp_x = (ux[:, None] * rho[None, :]).ravel()
    samp_y = (uy[:, None] * rho[None, :]).ravel()
    P = interp2d_matrix(xs_pad, xs_pad, samp_x, samp_y)

    # radial Lagrange extrapolation weights from rho to each node's radius
    wr = _lagrange_rowwise(r[idx_out], np.broadcast_to(rho, (idx_out.size, 4)))
    n_out = idx_out.size
    rows = np.repeat(np.arange(n_out), 4)
    cols = np.arange(4 * n_out)
    W = sp.csr_matrix((wr.ravel(), (rows, cols)), shape=(n_out, 4 * n_out))
    E_out = W @ P

    ident = sp.csr_matrix(
        (np.ones(inside.sum()), (np.where(inside)[0], np.where(inside)[0])),
        shape=(N * N, N * N))
    scatter = sp.csr_matrix(
        (np.ones(n_out), (idx_out, np.arange(n_out))), shape=(N * N, n_out))
    return (ident + scatter @ E_out).tocsr()


# ---------------------------------------------------------------------------
# masked finite-difference matrices (for least-squares operators)

def fd_matrix_masked(xs, mask, axis, h=None) -> sp.csr_matrix:
    """First-derivative matrix on in-mask nodes of a square grid.

    Within each along-axis run of in-mask nodes the stencil is the 5-point
    4th-order one, shifted one-sidedly near the run's ends; runs shorter than
    five nodes fall back to their full width.  Rows and columns both index the
    flattened (and still masked) grid in C order (ix, iy); out-of-mask columns
    never appear.
    """
    xs = np.asarray(xs, dtype=float)
    if h is None:
        h = xs[1] - xs[0]
    nx = xs.size
    flat_of = -np.ones(nx * nx, dtype=int)
    idx_in = np.where(mask.ravel())[0]
    flat_of[idx_in] = np.arange(idx_in.size)

    rows, cols, data = [], [], []
    for fixed in range(nx):
        line = mask[:, fixed] if axis == 0 else mask[fixed, :]
        js = np.where(line)[0]
        if js.size == 0:
            continue
        # contiguous runs
        splits = np.where(np.diff(js) > 1)[0] + 1
        for run in np.split(js, splits):
            L = run.size
            width = min(5, L)
            for pos, j in enumerate(run):
                lo = int(np.clip(pos - width // 2, 0, L - width))
                window = run[lo:lo + width]
                w = fornberg_weights(xs[j], xs[window], 1)
                if axis == 0:
                    r = j * nx + fixed
                    c = window * nx + fixed
                else:
                    r = fixed * nx + j
                    c = fixed * nx + window
                rows.extend([flat_of[r]] * width)
                cols.extend(flat_of[c])
                data.extend(w)
    return sp.csr_matrix((data, (rows, cols)),
                         shape=(idx_in.size, idx_in.size))


# ---------------------------------------------------------------------------
# conjugate gradient on the normal equations

def cgne(apply_A, apply_AH, b, *, maxiter=500, rtol=1e-8, ntol=1e-11, x0=None,
         inner_data=None, inner_sol=None, raise_on_stall=False):
    """CGLS: minimize ‖Ax − b‖ over x, starting from 0 (minimum-norm solution).

    Stops when the data residual ‖Ax − b‖/‖b‖ falls below ``rtol`` (consistent
    systems) or when the normal-equation residual ‖A*(Ax − b)‖ falls below
    ``ntol`` relative to its start — for inconsistent data the latter is the
    only one that converges, and the returned relres sits at the distance of b
    from the range.  ``inner_data``/``inner_sol`` override the Euclidean inner
    products when the two spaces carry quadrature weights; ``apply_AH`` must be
    the adjoint with respect to those same products.  Returns
    ``(x, relres, iterations, history)``.
    """
    if inner_data is None:
        inner_data = lambda u, v: complex(np.vdot(u, v))
    if inner_sol is None:
        inner_sol = lambda u, v: complex(np.vdot(u, v))

    bnorm = np.sqrt(abs(inner_data(b, b)))
    if bnorm == 0.0:
        return np.zeros_like(apply_AH(b)), 0.0, 0, [0.0]
    x = np.zeros_like(apply_AH(b)) if x0 is None else x0.copy()
    r = b - apply_A(x)
    s = apply_AH(r)
    p = s.copy()
    gamma = abs(inner_sol(s, s))
    gamma0 = max(gamma, 1e-300)
    relres = np.sqrt(abs(inner_data(r, r))) / bnorm
    history = [relres]
    it = 0
    while (relres > rtol and np.sqrt(gamma / gamma0) > ntol
           and it < maxiter and gamma > 0.0):
        q = apply_A(p)
        qq = abs(inner_data(q, q))
        if qq == 0.0:
            break
        alpha = gamma / qq
        x = x + alpha * p
        r = r - alpha * q
        s = apply_AH(r)
        gamma_new = abs(inner_sol(s, s))
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
        relres = np.sqrt(abs(inner_data(r, r))) / bnorm
        history.append(relres)
        it += 1
    if raise_on_stall and relres > rtol:
        raise SolverStalled("conjugate gradient did not converge", relres, it)
    return x, relres, it, history
