"""Parametrized mid-surfaces over rectangular charts.

A :class:`SurfacePatch` samples one analytic chart family on a tensor grid
and carries everything downstream modules need: tangents, unit normal and
its derivatives, first/second fundamental forms, principal curvatures, a
tensor Gauss-Legendre quadrature over the parameter rectangle, and the
finite-difference operators used for node-sampled fields.

Sign convention: the shape tensor is ``b_ij = a_i . d_j(normal)``
(equivalently ``-normal . d_i d_j r``), so an outward-oriented sphere of
radius R has principal curvatures ``+1/R``.
"""

import numpy as np
import sympy as sp

from .errors import BadDescriptor, DegenerateChart, OutOfDomain, TubularViolation
from .gridutil import (
    GridSplines,
    derivative_matrix,
    gauss_legendre_cells,
    spd_inv_sqrt_2x2,
    trapezoid_weights,
)

DEFAULT_GRID = (64, 64)
DEFAULT_QUAD_POINTS = 4


def _as_float_grid(x, like):
    x = np.asarray(x, dtype=float)
    if x.shape != like.shape:
        x = np.broadcast_to(x, like.shape).copy()
    return x


class _SympyChart:
    """Chart (value, jacobian, hessian) lambdified from sympy expressions."""

    def __init__(self, exprs):
        u, v = sp.symbols("u v")
        exprs = [sp.sympify(e) for e in exprs]
        self._val = [sp.lambdify((u, v), e, "numpy") for e in exprs]
        self._jac = [
            [sp.lambdify((u, v), sp.diff(e, s), "numpy") for s in (u, v)]
            for e in exprs
        ]
        self._hess = [
            [
                [sp.lambdify((u, v), sp.diff(e, s, t), "numpy") for t in (u, v)]
                for s in (u, v)
            ]
            for e in exprs
        ]

    def value(self, u, v):
        return np.stack([_as_float_grid(f(u, v), u) for f in self._val], axis=-1)

    def jac(self, u, v):
        out = np.empty(u.shape + (3, 2))
        for c in range(3):
            for j in range(2):
                out[..., c, j] = _as_float_grid(self._jac[c][j](u, v), u)
        return out

    def hess(self, u, v):
        out = np.empty(u.shape + (3, 2, 2))
        for c in range(3):
            for i in range(2):
                for j in range(2):
                    out[..., c, i, j] = _as_float_grid(self._hess[c][i][j](u, v), u)
        return out


class _Chart:
    """Hand-coded chart with closed-form derivatives."""

    def __init__(self, value, jac, hess):
        self.value = value
        self.jac = jac
        self.hess = hess


def _plate_family(params):
    def value(u, v):
        return np.stack([u, v, np.zeros_like(u)], axis=-1)

    def jac(u, v):
        J = np.zeros(u.shape + (3, 2))
        J[..., 0, 0] = 1.0
        J[..., 1, 1] = 1.0
        return J

    def hess(u, v):
        return np.zeros(u.shape + (3, 2, 2))

    return _Chart(value, jac, hess), +1.0, ((0.0, 1.0), (0.0, 1.0))


def _cylinder_family(params):
    R = float(params.get("radius", 1.0))
    arc = float(params.get("arc", np.pi / 2))
    length = float(params.get("length", 1.0))
    if R <= 0 or arc <= 0 or arc > 2 * np.pi or length <= 0:
        raise BadDescriptor(f"invalid cylinder parameters: {params}")

    def value(u, v):
        return np.stack([R * np.sin(u / R), v, R * np.cos(u / R) - R], axis=-1)

    def jac(u, v):
        J = np.zeros(u.shape + (3, 2))
        J[..., 0, 0] = np.cos(u / R)
        J[..., 2, 0] = -np.sin(u / R)
        J[..., 1, 1] = 1.0
        return J

    def hess(u, v):
        H = np.zeros(u.shape + (3, 2, 2))
        H[..., 0, 0, 0] = -np.sin(u / R) / R
        H[..., 2, 0, 0] = -np.cos(u / R) / R
        return H

    return _Chart(value, jac, hess), +1.0, ((0.0, R * arc), (0.0, length))


def _cap_polar_family(params):
    R = float(params.get("radius", 1.0))
    theta = float(params.get("polar_angle", np.pi / 3))
    gap = float(params.get("pole_gap", 1e-5))
    azimuth = float(params.get("azimuth", 2 * np.pi))
    if R <= 0 or not (gap < theta < np.pi):
        raise BadDescriptor(f"invalid spherical cap parameters: {params}")

    def value(u, v):
        su, cu = np.sin(u), np.cos(u)
        return np.stack([R * su * np.cos(v), R * su * np.sin(v), R * cu], axis=-1)

    def jac(u, v):
        su, cu = np.sin(u), np.cos(u)
        sv, cv = np.sin(v), np.cos(v)
        J = np.empty(u.shape + (3, 2))
        J[..., 0, 0] = R * cu * cv
        J[..., 1, 0] = R * cu * sv
        J[..., 2, 0] = -R * su
        J[..., 0, 1] = -R * su * sv
        J[..., 1, 1] = R * su * cv
        J[..., 2, 1] = 0.0
        return J

    def hess(u, v):
        su, cu = np.sin(u), np.cos(u)
        sv, cv = np.sin(v), np.cos(v)
        H = np.empty(u.shape + (3, 2, 2))
        H[..., 0, 0, 0] = -R * su * cv
        H[..., 1, 0, 0] = -R * su * sv
        H[..., 2, 0, 0] = -R * cu
        H[..., 0, 0, 1] = -R * cu * sv
        H[..., 1, 0, 1] = R * cu * cv
        H[..., 2, 0, 1] = 0.0
        H[..., :, 1, 0] = H[..., :, 0, 1]
        H[..., 0, 1, 1] = -R * su * cv
        H[..., 1, 1, 1] = -R * su * sv
        H[..., 2, 1, 1] = 0.0
        return H

    return _Chart(value, jac, hess), +1.0, ((gap, theta), (0.0, azimuth))


def _cap_square_family(params):
    R = float(params.get("radius", 1.0))
    theta = float(params.get("polar_angle", np.pi / 3))
    if R <= 0 or not (0 < theta < np.pi / 2):
        raise BadDescriptor(f"invalid spherical cap parameters: {params}")
    a = R * np.sin(theta) / np.sqrt(2.0)

    def _w(u, v):
        return np.sqrt(R * R - u * u - v * v)

    def value(u, v):
        return np.stack([u, v, _w(u, v)], axis=-1)

    def jac(u, v):
        w = _w(u, v)
        J = np.zeros(u.shape + (3, 2))
        J[..., 0, 0] = 1.0
        J[..., 1, 1] = 1.0
        J[..., 2, 0] = -u / w
        J[..., 2, 1] = -v / w
        return J

    def hess(u, v):
        w = _w(u, v)
        w3 = w ** 3
        H = np.zeros(u.shape + (3, 2, 2))
        H[..., 2, 0, 0] = -(R * R - v * v) / w3
        H[..., 2, 0, 1] = -(u * v) / w3
        H[..., 2, 1, 0] = H[..., 2, 0, 1]
        H[..., 2, 1, 1] = -(R * R - u * u) / w3
        return H

    return _Chart(value, jac, hess), +1.0, ((-a, a), (-a, a))


def _spherical_cap_family(params):
    chart = params.get("chart", "polar")
    if chart == "polar":
        return _cap_polar_family(params)
    if chart == "square":
        return _cap_square_family(params)
    raise BadDescriptor(f"unknown spherical cap chart: {chart!r}")


def _graph_family(params):
    f = params.get("f")
    if f is None:
        raise BadDescriptor("graph family needs an expression 'f' in u, v")
    # downward normal: convex-up graphs get positive curvature
    return _SympyChart(["u", "v", f]), -1.0, ((-0.5, 0.5), (-0.5, 0.5))


def _revolution_family(params):
    rho = params.get("profile_r")
    z = params.get("profile_z")
    if rho is None or z is None:
        raise BadDescriptor("revolution family needs 'profile_r' and 'profile_z' in u")
    u_range = params.get("u_range", (0.1, 1.0))
    azimuth = float(params.get("azimuth", 2 * np.pi))
    rho_s = sp.sympify(rho)
    z_s = sp.sympify(z)
    v = sp.symbols("v")
    exprs = [rho_s * sp.cos(v), rho_s * sp.sin(v), z_s]
    return (
        _SympyChart(exprs),
        +1.0,
        ((float(u_range[0]), float(u_range[1])), (0.0, azimuth)),
    )


_FAMILIES = {
    "plate": _plate_family,
    "cylinder": _cylinder_family,
    "spherical_cap": _spherical_cap_family,
    "graph": _graph_family,
    "revolution": _revolution_family,
}


def _frame_from_jac(jac, hess, orientation):
    """Unit normal and its chart derivatives from chart jacobian/hessian."""
    ru = jac[..., :, 0]
    rv = jac[..., :, 1]
    cross = np.cross(ru, rv)
    norm = np.linalg.norm(cross, axis=-1)
    n = orientation * cross / norm[..., None]
    dn = np.empty(jac.shape)
    for j in range(2):
        dcross = np.cross(hess[..., :, 0, j], rv) + np.cross(ru, hess[..., :, 1, j])
        proj = dcross - (np.einsum("...c,...c->...", cross, dcross) / norm ** 2)[
            ..., None
        ] * cross
        dn[..., :, j] = orientation * proj / norm[..., None]
    return n, dn, norm


class FundamentalForms:
    """First/second fundamental forms and frame at one or more points.

    Attributes
    ----------
    a1, a2 : tangent vectors (chart partials)
    n : unit normal
    g : 2x2 metric
    b : 2x2 covariant shape tensor, b_ij = a_i . d_j n
    shape_operator : g^{-1} b
    kappa : principal curvatures, ascending
    """

    def __init__(self, jac, hess, orientation):
        self.a1 = jac[..., :, 0]
        self.a2 = jac[..., :, 1]
        n, dn, _ = _frame_from_jac(jac, hess, orientation)
        self.n = n
        self.dn = dn
        self.g = np.einsum("...ci,...cj->...ij", jac, jac)
        self.b = -np.einsum("...c,...cij->...ij", n, hess)
        gis = spd_inv_sqrt_2x2(self.g)
        b_on = gis @ self.b @ gis
        self.kappa = np.linalg.eigvalsh(b_on)
        self.shape_operator = np.linalg.solve(self.g, self.b)


class SurfacePatch:
    """One chart of a mid-surface sampled on an n1 x n2 tensor grid.

    Immutable after construction; all numerical fields are read-only numpy
    arrays, so instances are safe to share across threads.
    """

    def __init__(self, family, params=None, domain=None, grid=DEFAULT_GRID,
                 derivative_mode="analytic", quad_points=DEFAULT_QUAD_POINTS):
        if family not in _FAMILIES:
            raise BadDescriptor(f"unknown surface family: {family!r}")
        params = dict(params or {})
        grid = tuple(int(g) for g in grid)
        if grid[0] < 8 or grid[1] < 8:
            raise BadDescriptor(f"grid must be at least 8x8, got {grid}")
        chart, orientation, default_domain = _FAMILIES[family](params)
        if domain is None:
            domain = default_domain
        domain = ((float(domain[0][0]), float(domain[0][1])),
                  (float(domain[1][0]), float(domain[1][1])))
        if domain[0][1] <= domain[0][0] or domain[1][1] <= domain[1][0]:
            raise BadDescriptor(f"empty parameter domain: {domain}")

        self.family = family
        self.params = params
        self.domain = domain
        self.shape = grid
        self.derivative_mode = derivative_mode
        self.quad_points = int(quad_points)
        self.orientation = orientation
        self._chart = chart

        n1, n2 = grid
        self.u_nodes = np.linspace(domain[0][0], domain[0][1], n1)
        self.v_nodes = np.linspace(domain[1][0], domain[1][1], n2)
        self.du = self.u_nodes[1] - self.u_nodes[0]
        self.dv = self.v_nodes[1] - self.v_nodes[0]
        self.U, self.V = np.meshgrid(self.u_nodes, self.v_nodes, indexing="ij")

        self.r = chart.value(self.U, self.V)
        if derivative_mode == "analytic":
            self.jac = chart.jac(self.U, self.V)
            self.hess = chart.hess(self.U, self.V)
        else:
            order = int(derivative_mode)
            Du = derivative_matrix(n1, self.du, order)
            Dv = derivative_matrix(n2, self.dv, order)
            self.jac = np.stack(
                [np.einsum("ij,jkc->ikc", Du, self.r),
                 np.einsum("ij,kjc->kic", Dv, self.r)], axis=-1)
            d2u = np.einsum("ij,jkc->ikc", Du, self.jac[..., 0])
            duv = np.einsum("ij,kjc->kic", Dv, self.jac[..., 0])
            d2v = np.einsum("ij,kjc->kic", Dv, self.jac[..., 1])
            self.hess = np.stack(
                [np.stack([d2u, duv], axis=-1),
                 np.stack([duv, d2v], axis=-1)], axis=-2)

        n, dn, cross_norm = _frame_from_jac(self.jac, self.hess, orientation)
        lim = 1e-11 * max(1.0, float(cross_norm.max()))
        if cross_norm.min() <= lim:
            raise DegenerateChart(
                f"immersion check failed: min |r_u x r_v| = {cross_norm.min():.3e}")
        self.normal = n
        self.dn = dn
        self.sqrt_g = cross_norm
        self.g = np.einsum("...ci,...cj->...ij", self.jac, self.jac)
        self.b = -np.einsum("...c,...cij->...ij", n, self.hess)
        gis = spd_inv_sqrt_2x2(self.g)
        self.g_inv_sqrt = gis
        self.kappa = np.linalg.eigvalsh(gis @ self.b @ gis)

        # finite-difference machinery for node-sampled fields
        fd_order = 4 if derivative_mode == "analytic" else int(derivative_mode)
        self.fd_order = fd_order
        self.Du = derivative_matrix(n1, self.du, fd_order)
        self.Dv = derivative_matrix(n2, self.dv, fd_order)
        tu = np.einsum("ij,jkc->ikc", self.Du, self.r)
        tv = np.einsum("ij,kjc->kic", self.Dv, self.r)
        self.tangents_disc = np.stack([tu, tv], axis=-1)
        self.g_disc = np.einsum("...ci,...cj->...ij",
                                self.tangents_disc, self.tangents_disc)
        self.node_mass = (
            trapezoid_weights(n1, self.du)[:, None]
            * trapezoid_weights(n2, self.dv)[None, :]
            * self.sqrt_g
        )
        self.area = float(self.node_mass.sum())

        self._quad = None
        self._splines = None
        for a in ("r", "jac", "hess", "normal", "dn", "sqrt_g", "g", "b",
                  "kappa", "g_disc", "tangents_disc", "node_mass"):
            getattr(self, a).setflags(write=False)

    # -- chart evaluation ------------------------------------------------

    def _point_splines(self):
        if self._splines is None:
            self._splines = GridSplines(self.u_nodes, self.v_nodes, self.r)
        return self._splines

    def chart_eval(self, u, v):
        """Chart position/jacobian/hessian at arbitrary parameter points."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.derivative_mode == "analytic":
            return self._chart.value(u, v), self._chart.jac(u, v), self._chart.hess(u, v)
        s = self._point_splines()
        val = s(u, v)
        jac = np.stack([s(u, v, du=1), s(u, v, dv=1)], axis=-1)
        hess = np.stack(
            [np.stack([s(u, v, du=2), s(u, v, du=1, dv=1)], axis=-1),
             np.stack([s(u, v, du=1, dv=1), s(u, v, dv=2)], axis=-1)], axis=-2)
        return val, jac, hess

    def contains(self, u, v):
        (u0, u1), (v0, v1) = self.domain
        tol_u = 1e-12 * (abs(u1 - u0) + 1)
        tol_v = 1e-12 * (abs(v1 - v0) + 1)
        return np.all((u >= u0 - tol_u) & (u <= u1 + tol_u)
                      & (v >= v0 - tol_v) & (v <= v1 + tol_v))

    # -- quadrature ------------------------------------------------------

    @property
    def quad(self):
        """Tensor Gauss-Legendre rule over the grid cells (cached).

        Returns a dict with flattened parameter coordinates ``u``, ``v``,
        parameter weights ``w``, the area factor ``sqrt_g`` and the frame
        arrays needed by the thin-shell energy.
        """
        if self._quad is None:
            qu, wu = gauss_legendre_cells(self.u_nodes, self.quad_points)
            qv, wv = gauss_legendre_cells(self.v_nodes, self.quad_points)
            Uq, Vq = np.meshgrid(qu, qv, indexing="ij")
            Wq = np.outer(wu, wv)
            u = Uq.ravel()
            v = Vq.ravel()
            val, jac, hess = self.chart_eval(u, v)
            n, dn, cross = _frame_from_jac(jac, hess, self.orientation)
            g = np.einsum("...ci,...cj->...ij", jac, jac)
            self._quad = {
                "u": u, "v": v, "w": Wq.ravel(),
                "r": val, "jac": jac, "n": n, "dn": dn,
                "g": g, "sqrt_g": cross,
                "grid_shape": (len(qu), len(qv)),
            }
        return self._quad

    # -- serialization ---------------------------------------------------

    def to_dict(self):
        return {
            "family": self.family,
            "params": self.params,
            "domain": [list(self.domain[0]), list(self.domain[1])],
            "grid": list(self.shape),
            "derivative_mode": self.derivative_mode,
            "quad_points": self.quad_points,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["family"],
            params=d.get("params"),
            domain=d.get("domain"),
            grid=d.get("grid", DEFAULT_GRID),
            derivative_mode=d.get("derivative_mode", "analytic"),
            quad_points=d.get("quad_points", DEFAULT_QUAD_POINTS),
        )


def build_surface(descriptor=None, **kwargs):
    """Build a :class:`SurfacePatch` from a descriptor dict (or kwargs).

    Descriptor fields: ``family`` (one of plate, cylinder, spherical_cap,
    graph, revolution), ``params``, ``domain``, ``grid``,
    ``derivative_mode``, ``quad_points``.
    """
    d = dict(descriptor or {})
    d.update(kwargs)
    try:
        family = d.pop("family")
    except KeyError:
        raise BadDescriptor("descriptor lacks 'family'") from None
    return SurfacePatch(
        family,
        params=d.pop("params", None),
        domain=d.pop("domain", None),
        grid=d.pop("grid", DEFAULT_GRID),
        derivative_mode=d.pop("derivative_mode", "analytic"),
        quad_points=d.pop("quad_points", DEFAULT_QUAD_POINTS),
    )


def frames(surface, uv):
    """Fundamental forms of the patch at parameter point(s) ``uv``."""
    u = np.asarray(uv[0], dtype=float)
    v = np.asarray(uv[1], dtype=float)
    if not surface.contains(u, v):
        raise OutOfDomain(f"point {uv} outside chart domain {surface.domain}")
    _, jac, hess = surface.chart_eval(u, v)
    return FundamentalForms(jac, hess, surface.orientation)


def surface_integral(surface, f):
    """Integrate a scalar field against the surface area measure.

    ``f`` may be a constant, a callable ``f(u, v)``, an array sampled on
    the node grid (interpolated with quintic splines to the quadrature
    points), or an array already sampled on the quadrature grid.
    """
    q = surface.quad
    if callable(f):
        vals = np.asarray(f(q["u"], q["v"]), dtype=float)
        vals = np.broadcast_to(vals, q["u"].shape)
    elif np.ndim(f) == 0:
        vals = np.full(q["u"].shape, float(f))
    else:
        f = np.asarray(f, dtype=float)
        if f.shape == surface.shape:
            vals = GridSplines(surface.u_nodes, surface.v_nodes, f)(q["u"], q["v"])
        elif f.shape == q["grid_shape"]:
            vals = f.ravel()
        elif f.shape == q["u"].shape:
            vals = f
        else:
            raise ValueError(
                f"field shape {f.shape} matches neither node grid "
                f"{surface.shape} nor quadrature grid {q['grid_shape']}")
    return float(np.sum(vals * q["w"] * q["sqrt_g"]))


class EllipticityReport:
    def __init__(self, is_elliptic, C, kappa_min, kappa_max):
        self.is_elliptic = bool(is_elliptic)
        self.C = float(C)
        self.kappa_min = float(kappa_min)
        self.kappa_max = float(kappa_max)

    def to_dict(self):
        return {"is_elliptic": self.is_elliptic, "C": self.C,
                "kappa_min": self.kappa_min, "kappa_max": self.kappa_max}


def ellipticity_check(surface, threshold=1e-8):
    """Uniform definiteness of the shape tensor over all grid nodes.

    The patch counts as elliptic when every principal curvature at every
    node is >= threshold (or uniformly <= -threshold).  The uniformity
    constant is ``max(|kappa|_max, 1/|kappa|_min)``.
    """
    kmin = float(surface.kappa.min())
    kmax = float(surface.kappa.max())
    pos = kmin >= threshold
    neg = kmax <= -threshold
    if pos or neg:
        lo = min(abs(kmin), abs(kmax))
        hi = max(abs(kmin), abs(kmax))
        return EllipticityReport(True, max(hi, 1.0 / lo), kmin, kmax)
    return EllipticityReport(False, np.inf, kmin, kmax)


def assert_tubular(surface, h):
    """Check that thickness h stays below the focal distance."""
    kmax = float(np.abs(surface.kappa).max())
    if h <= 0:
        raise TubularViolation(f"thickness must be positive, got {h}")
    if h * kmax >= 1.0:
        raise TubularViolation(
            f"h * max|kappa| = {h * kmax:.3f} >= 1: tubular coordinates degenerate")
    # volume element (1 + t k1)(1 + t k2) must stay positive on the fiber
    for t in (-h / 2, h / 2):
        jac_t = (1.0 + t * surface.kappa[..., 0]) * (1.0 + t * surface.kappa[..., 1])
        if jac_t.min() <= 0:
            raise TubularViolation("tubular volume element nonpositive on a fiber")
