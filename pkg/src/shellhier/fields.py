"""Vector fields on a surface patch: displacements, deformations, strains.

Fields are sampled on the patch node grid and carry first and second
derivative grids.  Derivatives come from the construction when it is exact
(expressions, rigid motions, chart-based fields) and from the patch's
finite-difference operators otherwise.  Off-node evaluation (needed by the
thin-shell quadrature) uses exact callables when available and quintic
splines of the node data as fallback.
"""

import numpy as np
import sympy as sp

from .gridutil import GridSplines
from .errors import BadDescriptor


def _fd_jac(patch, values):
    du = np.einsum("ij,jkc->ikc", patch.Du, values)
    dv = np.einsum("ij,kjc->kic", patch.Dv, values)
    return np.stack([du, dv], axis=-1)


def _fd_hess(patch, jac):
    duu = np.einsum("ij,jkc->ikc", patch.Du, jac[..., 0])
    duv = np.einsum("ij,kjc->kic", patch.Dv, jac[..., 0])
    dvv = np.einsum("ij,kjc->kic", patch.Dv, jac[..., 1])
    return np.stack([np.stack([duu, duv], axis=-1),
                     np.stack([duv, dvv], axis=-1)], axis=-2)


class SurfaceField:
    """A 3-vector field on a patch with sampled first/second derivatives."""

    def __init__(self, patch, values, jac=None, hess=None,
                 eval_fn=None, jac_fn=None, meta=None):
        values = np.asarray(values, dtype=float)
        if values.shape != patch.shape + (3,):
            raise ValueError(
                f"field shape {values.shape} does not match grid {patch.shape}")
        self.patch = patch
        self.values = values
        self.jac = _fd_jac(patch, values) if jac is None else np.asarray(jac, float)
        self.hess = _fd_hess(patch, self.jac) if hess is None else np.asarray(hess, float)
        self._eval_fn = eval_fn
        self._jac_fn = jac_fn
        self._splines = None
        self.meta = dict(meta or {})

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, patch):
        z = np.zeros(patch.shape + (3,))
        return cls(patch, z, jac=np.zeros(patch.shape + (3, 2)),
                   hess=np.zeros(patch.shape + (3, 2, 2)),
                   eval_fn=lambda u, v: np.zeros(u.shape + (3,)),
                   jac_fn=lambda u, v: np.zeros(u.shape + (3, 2)))

    @classmethod
    def constant(cls, patch, vec):
        vec = np.asarray(vec, dtype=float)
        vals = np.broadcast_to(vec, patch.shape + (3,)).copy()
        return cls(patch, vals, jac=np.zeros(patch.shape + (3, 2)),
                   hess=np.zeros(patch.shape + (3, 2, 2)),
                   eval_fn=lambda u, v: np.broadcast_to(vec, u.shape + (3,)).copy(),
                   jac_fn=lambda u, v: np.zeros(u.shape + (3, 2)))

    @classmethod
    def from_arrays(cls, patch, values, jac=None, hess=None):
        return cls(patch, values, jac=jac, hess=hess)

    @classmethod
    def from_callable(cls, patch, fn, jac_fn=None, hess_fn=None):
        vals = np.asarray(fn(patch.U, patch.V), dtype=float)
        jac = None if jac_fn is None else np.asarray(jac_fn(patch.U, patch.V), float)
        hess = None
        if hess_fn is not None:
            hess = np.asarray(hess_fn(patch.U, patch.V), dtype=float)
        return cls(patch, vals, jac=jac, hess=hess,
                   eval_fn=fn, jac_fn=jac_fn)

    @classmethod
    def from_expression(cls, patch, components):
        """Field from three sympy expression strings in u, v."""
        if len(components) != 3:
            raise BadDescriptor("expression field needs exactly 3 components")
        u, v = sp.symbols("u v")
        exprs = [sp.sympify(c) for c in components]
        vals = [sp.lambdify((u, v), e, "numpy") for e in exprs]
        jacs = [[sp.lambdify((u, v), sp.diff(e, s), "numpy") for s in (u, v)]
                for e in exprs]
        hesss = [[[sp.lambdify((u, v), sp.diff(e, s, t), "numpy") for t in (u, v)]
                  for s in (u, v)] for e in exprs]

        def _grid(f, U, V):
            out = np.asarray(f(U, V), dtype=float)
            if out.shape != U.shape:
                out = np.broadcast_to(out, U.shape).copy()
            return out

        def eval_fn(U, V):
            return np.stack([_grid(f, U, V) for f in vals], axis=-1)

        def jac_fn(U, V):
            out = np.empty(U.shape + (3, 2))
            for c in range(3):
                for j in range(2):
                    out[..., c, j] = _grid(jacs[c][j], U, V)
            return out

        def hess_fn(U, V):
            out = np.empty(U.shape + (3, 2, 2))
            for c in range(3):
                for i in range(2):
                    for j in range(2):
                        out[..., c, i, j] = _grid(hesss[c][i][j], U, V)
            return out

        f = cls.from_callable(patch, eval_fn, jac_fn, hess_fn)
        f.meta["expression"] = list(components)
        return f

    # -- evaluation ----------------------------------------------------------

    def at(self, u, v, need_jac=False):
        """Values (and optionally jacobians) at arbitrary parameter points."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if self._eval_fn is not None:
            vals = np.asarray(self._eval_fn(u, v), dtype=float)
            if not need_jac:
                return vals
            if self._jac_fn is not None:
                return vals, np.asarray(self._jac_fn(u, v), dtype=float)
        if self._splines is None:
            self._splines = GridSplines(self.patch.u_nodes, self.patch.v_nodes,
                                        self.values)
        s = self._splines
        vals = s(u, v)
        if not need_jac:
            return vals
        jac = np.stack([s(u, v, du=1), s(u, v, dv=1)], axis=-1)
        return vals, jac

    # -- algebra ---------------------------------------------------------

    def scaled(self, s):
        s = float(s)
        eval_fn = jac_fn = None
        if self._eval_fn is not None:
            base_eval = self._eval_fn
            eval_fn = lambda u, v: s * np.asarray(base_eval(u, v), dtype=float)
        if self._jac_fn is not None:
            base_jac = self._jac_fn
            jac_fn = lambda u, v: s * np.asarray(base_jac(u, v), dtype=float)
        return type(self)(self.patch, s * self.values, jac=s * self.jac,
                          hess=s * self.hess, eval_fn=eval_fn, jac_fn=jac_fn)

    def shifted(self, vec):
        """Add a constant vector."""
        vec = np.asarray(vec, dtype=float)
        eval_fn = None
        if self._eval_fn is not None:
            base_eval = self._eval_fn
            eval_fn = lambda u, v: np.asarray(base_eval(u, v), float) + vec
        return type(self)(self.patch, self.values + vec, jac=self.jac,
                          hess=self.hess, eval_fn=eval_fn, jac_fn=self._jac_fn)

    def sup_norm(self):
        return float(np.abs(self.values).max())

    def rigidly_moved(self, Q, c=(0.0, 0.0, 0.0)):
        """Compose with the rigid motion x -> Q x + c."""
        Q = np.asarray(Q, dtype=float)
        c = np.asarray(c, dtype=float)
        vals = np.einsum("ab,...b->...a", Q, self.values) + c
        jac = np.einsum("ab,...bj->...aj", Q, self.jac)
        hess = np.einsum("ab,...bij->...aij", Q, self.hess)
        eval_fn = jac_fn = None
        if self._eval_fn is not None:
            base_eval = self._eval_fn
            eval_fn = lambda u, v: np.einsum(
                "ab,...b->...a", Q, np.asarray(base_eval(u, v), float)) + c
        if self._jac_fn is not None:
            base_jac = self._jac_fn
            jac_fn = lambda u, v: np.einsum(
                "ab,...bj->...aj", Q, np.asarray(base_jac(u, v), float))
        return type(self)(self.patch, vals, jac=jac, hess=hess,
                          eval_fn=eval_fn, jac_fn=jac_fn)

    # -- serialization -----------------------------------------------------

    def to_dict(self):
        if "expression" in self.meta:
            return {"kind": "expression", "components": self.meta["expression"]}
        return {"kind": "values", "data": self.values.tolist()}

    @classmethod
    def from_dict(cls, patch, d):
        kind = d.get("kind", "values")
        if kind == "expression":
            return cls.from_expression(patch, d["components"])
        if kind == "values":
            return cls.from_arrays(patch, np.asarray(d["data"], dtype=float))
        raise BadDescriptor(f"unknown field kind {kind!r}")


def combine(patch, pairs, cls=None):
    """Linear combination sum(c * field) as a new field on the same patch."""
    cls = cls or SurfaceField
    vals = sum(c * f.values for c, f in pairs)
    jac = sum(c * f.jac for c, f in pairs)
    hess = sum(c * f.hess for c, f in pairs)
    eval_fn = jac_fn = None
    if all(f._eval_fn is not None for _, f in pairs):
        closures = [(c, f._eval_fn) for c, f in pairs]
        eval_fn = lambda u, v: sum(
            c * np.asarray(fn(u, v), dtype=float) for c, fn in closures)
    if all(f._jac_fn is not None for _, f in pairs):
        jclosures = [(c, f._jac_fn) for c, f in pairs]
        jac_fn = lambda u, v: sum(
            c * np.asarray(fn(u, v), dtype=float) for c, fn in jclosures)
    return cls(patch, vals, jac=jac, hess=hess, eval_fn=eval_fn, jac_fn=jac_fn)


class DisplacementField(SurfaceField):
    """Displacement of the mid-surface (same sampling contract as base)."""


class MidsurfaceDeformation(SurfaceField):
    """A deformation y of the mid-surface; image tangents must have rank 2."""

    @classmethod
    def identity(cls, patch):
        chart = patch._chart
        return cls(patch, patch.r.copy(), jac=patch.jac.copy(),
                   hess=patch.hess.copy(),
                   eval_fn=chart.value, jac_fn=chart.jac)

    @classmethod
    def from_displacement(cls, disp, scale=1.0):
        """id + scale * V as a deformation."""
        ident = cls.identity(disp.patch)
        return combine(disp.patch, [(1.0, ident), (float(scale), disp)], cls=cls)


def normal_field(patch):
    """The unit normal of the patch as a field with exact derivatives."""
    from .geometry import _frame_from_jac

    def eval_fn(u, v):
        _, jac, hess = patch.chart_eval(u, v)
        n, _, _ = _frame_from_jac(jac, hess, patch.orientation)
        return n

    def jac_fn(u, v):
        _, jac, hess = patch.chart_eval(u, v)
        _, dn, _ = _frame_from_jac(jac, hess, patch.orientation)
        return dn

    return SurfaceField(patch, patch.normal.copy(), jac=patch.dn.copy(),
                        eval_fn=eval_fn, jac_fn=jac_fn)


def rigid_motion_fields(patch):
    """The six linearized rigid motions with exact derivative grids.

    Order: three translations e_k, three rotations e_k x r.
    """
    out = [DisplacementField.constant(patch, e)
           for e in np.eye(3)]
    chart = patch._chart
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        vals = np.cross(e, patch.r)
        jac = np.stack([np.cross(e, patch.jac[..., 0]),
                        np.cross(e, patch.jac[..., 1])], axis=-1)
        hess = np.stack(
            [np.stack([np.cross(e, patch.hess[..., 0, 0]),
                       np.cross(e, patch.hess[..., 0, 1])], axis=-1),
             np.stack([np.cross(e, patch.hess[..., 1, 0]),
                       np.cross(e, patch.hess[..., 1, 1])], axis=-1)], axis=-2)

        def eval_fn(u, v, _e=e):
            return np.cross(_e, chart.value(u, v))

        def jac_fn(u, v, _e=e):
            J = chart.jac(u, v)
            return np.stack([np.cross(_e, J[..., 0]),
                             np.cross(_e, J[..., 1])], axis=-1)

        out.append(DisplacementField(patch, vals, jac=jac, hess=hess,
                                     eval_fn=eval_fn, jac_fn=jac_fn))
    return out


class SkewField:
    """Axial-vector representation of a skew matrix field A(x) v = w(x) x v."""

    def __init__(self, patch, axial, residual=0.0):
        self.patch = patch
        self.axial = np.asarray(axial, dtype=float)
        self.residual = float(residual)

    def matrices(self):
        w = self.axial
        A = np.zeros(w.shape[:-1] + (3, 3))
        A[..., 0, 1] = -w[..., 2]
        A[..., 0, 2] = w[..., 1]
        A[..., 1, 2] = -w[..., 0]
        return A - np.swapaxes(A, -1, -2)

    def apply(self, vec):
        return np.cross(self.axial, vec)


class StrainField:
    """Symmetric 2x2 tangential strain in chart coordinates."""

    def __init__(self, patch, tensor, membership_residual=None):
        tensor = np.asarray(tensor, dtype=float)
        self.patch = patch
        self.tensor = 0.5 * (tensor + np.swapaxes(tensor, -1, -2))
        self.membership_residual = membership_residual

    @classmethod
    def zero(cls, patch):
        return cls(patch, np.zeros(patch.shape + (2, 2)))


class DisplacementHierarchy:
    """Ordered displacements (V_1, ..., V_N) generating id + sum eps^i V_i."""

    def __init__(self, fields):
        fields = list(fields)
        if not fields:
            raise BadDescriptor("hierarchy needs at least one displacement")
        patch = fields[0].patch
        if any(f.patch is not patch for f in fields):
            raise BadDescriptor("hierarchy fields live on different patches")
        self.fields = fields
        self.patch = patch

    @property
    def order(self):
        return len(self.fields)

    def deformation(self, eps):
        """The deformation id + sum eps^i V_i at a concrete eps."""
        pairs = [(1.0, MidsurfaceDeformation.identity(self.patch))]
        pairs += [(float(eps) ** (i + 1), f) for i, f in enumerate(self.fields)]
        return combine(self.patch, pairs, cls=MidsurfaceDeformation)

    def to_dict(self):
        return {"fields": [f.to_dict() for f in self.fields]}

    @classmethod
    def from_dict(cls, patch, d):
        return cls([DisplacementField.from_dict(patch, fd) for fd in d["fields"]])
