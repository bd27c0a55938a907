"""Uniform-grid differentiation and quadrature helpers.

Everything here is deterministic: fixed stencils, fixed summation order.
"""

import numpy as np
from scipy.interpolate import RectBivariateSpline


def fornberg_weights(x0, x, m):
    """Finite-difference weights for derivatives 0..m at x0 from nodes x.

    Classic recursion of Fornberg (1988).  Returns array of shape
    (m + 1, len(x)); row k holds the weights of the k-th derivative.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((m + 1, n))
    c1 = 1.0
    c4 = x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


def derivative_matrix(n, spacing, order=4):
    """Dense n x n first-derivative matrix on a uniform grid.

    Interior rows use the centered (order+1)-point stencil; rows near the
    boundary use one-sided stencils one node wider, so that applying the
    matrix twice still yields an O(h^order) second derivative.
    """
    if order not in (2, 4):
        raise ValueError("supported difference orders: 2, 4")
    half = order // 2
    width = order + 2  # one-sided stencils use one extra node
    if n < width:
        raise ValueError(f"grid too small for order-{order} stencils: n={n}")
    D = np.zeros((n, n))
    xs = np.arange(order + 1, dtype=float) * spacing
    center = fornberg_weights(xs[half], xs, 1)[1]
    for i in range(half, n - half):
        D[i, i - half : i + half + 1] = center
    xe = np.arange(width, dtype=float) * spacing
    for i in range(half):
        D[i, :width] = fornberg_weights(xe[i], xe, 1)[1]
        D[n - 1 - i, n - width :] = fornberg_weights(xe[width - 1 - i], xe, 1)[1]
    return D


def trapezoid_weights(n, spacing):
    """Composite trapezoid weights on a uniform 1D grid."""
    w = np.full(n, spacing)
    w[0] = w[-1] = 0.5 * spacing
    return w


def gauss_legendre_cells(edges, points_per_cell):
    """Tensor Gauss-Legendre rule on the cells defined by sorted edges.

    Returns (nodes, weights) flattened over all cells, in cell order.
    """
    xg, wg = np.polynomial.legendre.leggauss(points_per_cell)
    lo = edges[:-1]
    hi = edges[1:]
    mid = 0.5 * (lo + hi)
    rad = 0.5 * (hi - lo)
    nodes = (mid[:, None] + rad[:, None] * xg[None, :]).ravel()
    weights = (rad[:, None] * wg[None, :]).ravel()
    return nodes, weights


class GridSplines:
    """Per-component quintic spline interpolants of a node-sampled field."""

    def __init__(self, u_nodes, v_nodes, values, k=5):
        k = min(k, len(u_nodes) - 1, len(v_nodes) - 1)
        comps = values.reshape(values.shape[0], values.shape[1], -1)
        self._shape = values.shape[2:]
        self._splines = [
            RectBivariateSpline(u_nodes, v_nodes, comps[:, :, c], kx=k, ky=k)
            for c in range(comps.shape[2])
        ]

    def __call__(self, u, v, du=0, dv=0):
        cols = [s(u, v, dx=du, dy=dv, grid=False) for s in self._splines]
        out = np.stack(cols, axis=-1)
        return out.reshape(u.shape + self._shape) if self._shape else out[..., 0]


def sym2(mat):
    """Symmetric part of the trailing 2x2 (or 3x3) axes."""
    return 0.5 * (mat + np.swapaxes(mat, -1, -2))


def spd_sqrt_2x2(g):
    """Square root of a field of SPD 2x2 matrices (closed form)."""
    a = g[..., 0, 0]
    b = g[..., 0, 1]
    c = g[..., 1, 1]
    s = np.sqrt(a * c - b * b)
    t = np.sqrt(a + c + 2.0 * s)
    out = g.copy()
    out[..., 0, 0] += s
    out[..., 1, 1] += s
    return out / t[..., None, None]


def spd_inv_sqrt_2x2(g):
    """Inverse square root of a field of SPD 2x2 matrices (closed form)."""
    a = g[..., 0, 0]
    b = g[..., 0, 1]
    c = g[..., 1, 1]
    det = a * c - b * b
    s = np.sqrt(det)
    t = np.sqrt(a + c + 2.0 * s)
    # g^{1/2} = (g + s I)/t; invert the 2x2 explicitly
    ia = (c + s) / (t * s)
    ic = (a + s) / (t * s)
    ib = -b / (t * s)
    out = np.empty_like(g)
    out[..., 0, 0] = ia
    out[..., 0, 1] = ib
    out[..., 1, 0] = ib
    out[..., 1, 1] = ic
    return out


def frob2_sym(m):
    """Squared Frobenius norm over the trailing 2x2 axes."""
    return np.einsum("...ij,...ij->...", m, m)
