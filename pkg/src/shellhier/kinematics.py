"""Kinematics of mid-surface deformations and displacement hierarchies.

Pullback fundamental forms, rotation-field recovery, the exact-in-eps
metric expansion, discrete infinitesimal-isometry solvers, and membership
tests for the finite strain space.

Discretization note: the quadratic strain form and the least-squares
projections are built from finite-difference tangents (the FD derivative
of the sampled chart), not the analytic ones.  Differentiation is linear,
so sampled rigid motions ``c + w x r`` are then annihilated *exactly*:
rigid modes sit in the discrete kernel at rounding level rather than at
truncation level.
"""

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as splinalg
from scipy.linalg import eigh

from .errors import (
    DegenerateImage,
    InconclusiveFit,
    NotAnIsometry,
    NotAPlate,
    OrderTooHigh,
    SolverFailure,
)
from .fields import (
    DisplacementField,
    DisplacementHierarchy,
    SkewField,
    StrainField,
    rigid_motion_fields,
)
from .geometry import _frame_from_jac
from .gridutil import frob2_sym, spd_inv_sqrt_2x2, sym2

DEFAULT_EPS_SWEEP = tuple(2.0 ** (-k) for k in range(4, 11))


# ---------------------------------------------------------------------------
# pullback forms
# ---------------------------------------------------------------------------

def pullback_metric(surface, y, where="nodes"):
    """First fundamental form of the deformed surface in chart coordinates.

    ``where='nodes'`` uses the field's carried jacobian at the grid nodes;
    ``where='cells'`` builds the metric at cell midpoints from edge-average
    differences of the node values (the collocation used by the matching
    solver, exact on rigid motions of the sampled chart).
    """
    if where == "nodes":
        return np.einsum("...ci,...cj->...ij", y.jac, y.jac)
    if where == "cells":
        vals = y.values if hasattr(y, "values") else np.asarray(y)
        return cell_metric(surface, vals)
    raise ValueError(f"unknown sampling {where!r}")


def cell_difference_ops(surface):
    """Sparse edge-average difference/average operators onto cell midpoints.

    Returns (Tu, Tv, Avg) mapping node-sampled scalars/components (flattened
    n1*n2) to the (n1-1)(n2-1) cell midpoints: Tu/Tv approximate the chart
    partial derivatives there to second order, Avg interpolates.
    """
    n1, n2 = surface.shape

    def diff(n, d):
        return sparse.diags([np.full(n - 1, -1.0 / d), np.full(n - 1, 1.0 / d)],
                            [0, 1], shape=(n - 1, n)).tocsr()

    def avg(n):
        return sparse.diags([np.full(n - 1, 0.5), np.full(n - 1, 0.5)],
                            [0, 1], shape=(n - 1, n)).tocsr()

    Tu = sparse.kron(diff(n1, surface.du), avg(n2), format="csr")
    Tv = sparse.kron(avg(n1), diff(n2, surface.dv), format="csr")
    Avg = sparse.kron(avg(n1), avg(n2), format="csr")
    return Tu, Tv, Avg


def cell_metric(surface, values):
    """Pullback metric at cell midpoints from node-sampled positions."""
    n1, n2 = surface.shape
    Tu, Tv, _ = cell_difference_ops(surface)
    flat = np.asarray(values, dtype=float).reshape(n1 * n2, 3)
    tu = Tu @ flat
    tv = Tv @ flat
    G = np.empty((n1 - 1, n2 - 1, 2, 2))
    G[..., 0, 0] = np.einsum("nc,nc->n", tu, tu).reshape(n1 - 1, n2 - 1)
    G[..., 0, 1] = np.einsum("nc,nc->n", tu, tv).reshape(n1 - 1, n2 - 1)
    G[..., 1, 0] = G[..., 0, 1]
    G[..., 1, 1] = np.einsum("nc,nc->n", tv, tv).reshape(n1 - 1, n2 - 1)
    return G


def pullback_shape(surface, y, degeneracy_tol=1e-10):
    """Second fundamental form of the image surface, pulled back to the chart.

    The image normal is oriented like the patch normal (so ``y = id``
    reproduces the patch's shape tensor exactly).  Raises
    :class:`DegenerateImage` when the image tangents nearly collapse.
    """
    cross = np.cross(y.jac[..., :, 0], y.jac[..., :, 1])
    norm = np.linalg.norm(cross, axis=-1)
    if norm.min() <= degeneracy_tol * max(1.0, float(norm.max())):
        raise DegenerateImage(
            f"image tangents degenerate: min |y_u x y_v| = {norm.min():.3e}")
    n, _, _ = _frame_from_jac(y.jac, y.hess, surface.orientation)
    return -np.einsum("...c,...cij->...ij", n, y.hess)


# ---------------------------------------------------------------------------
# strain helpers
# ---------------------------------------------------------------------------

def tangential_strain(surface, field, discrete=True):
    """Linearized tangential strain sym(a_i . d_j V) in chart coordinates.

    With ``discrete=True`` both the tangents and the displacement gradient
    come from the patch FD operators (value samples only); otherwise the
    field's carried jacobian and the analytic tangents are used.
    """
    if discrete:
        tang = surface.tangents_disc
        du = np.einsum("ij,jkc->ikc", surface.Du, field.values)
        dv = np.einsum("ij,kjc->kic", surface.Dv, field.values)
        jac = np.stack([du, dv], axis=-1)
    else:
        tang = surface.jac
        jac = field.jac
    return sym2(np.einsum("...ci,...cj->...ij", tang, jac))


def _orthonormalize_2tensor(surface, m, discrete=True):
    g = surface.g_disc if discrete else surface.g
    P = spd_inv_sqrt_2x2(g)
    return P @ m @ P


def strain_quotient(surface, field, discrete=True):
    """Rayleigh quotient of the linearized-strain form at the field.

    Zero (to rounding) exactly on infinitesimal isometries at the discrete
    level; rigid motions are annihilated structurally.
    """
    s = tangential_strain(surface, field, discrete=discrete)
    s = _orthonormalize_2tensor(surface, s, discrete=discrete)
    num = float(np.sum(surface.node_mass * frob2_sym(s)))
    den = float(np.sum(surface.node_mass
                       * np.einsum("...c,...c->...", field.values, field.values)))
    if den == 0.0:
        return 0.0
    return num / den


def v1_tolerance(surface):
    """Scale-aware Rayleigh-quotient threshold for 'numerically in V1'."""
    mean_pi2 = float(np.mean(np.sum(surface.kappa ** 2, axis=-1)))
    return 1e-8 * (surface.area * mean_pi2 + 1.0)


# ---------------------------------------------------------------------------
# rotation-field recovery and first-order bending
# ---------------------------------------------------------------------------

def recover_rotation_field(surface, field):
    """Least-squares axial vector w(x) with w x a_i = d_i V at each node.

    The residual is the L2 norm of the defect of the overdetermined 6x3
    system; it vanishes (to discretization level) iff the field is an
    infinitesimal isometry.
    """
    a = surface.jac  # (..., 3, 2) analytic tangents
    dv = field.jac
    # normal equations: sum_i (|a_i|^2 I - a_i a_i^T) w = sum_i a_i x d_i V
    A = np.zeros(surface.shape + (3, 3))
    rhs = np.zeros(surface.shape + (3,))
    for i in range(2):
        ai = a[..., :, i]
        na2 = np.einsum("...c,...c->...", ai, ai)
        A += na2[..., None, None] * np.eye(3)
        A -= np.einsum("...b,...c->...bc", ai, ai)
        rhs += np.cross(ai, dv[..., :, i])
    w = np.linalg.solve(A, rhs[..., None])[..., 0]
    defect = 0.0
    for i in range(2):
        d = np.cross(w, a[..., :, i]) - dv[..., :, i]
        defect += np.sum(surface.node_mass
                         * np.einsum("...c,...c->...", d, d))
    return SkewField(surface, w, residual=float(np.sqrt(defect)))


def first_order_bending(surface, field, tol=None):
    """First-order change of the second fundamental form under id + eps V.

    Computed as ``a_i . (d_j w x n)`` with w the recovered rotation field;
    requires the field to be numerically an infinitesimal isometry.
    """
    tol = v1_tolerance(surface) if tol is None else tol
    q = strain_quotient(surface, field)
    if q > tol:
        raise NotAnIsometry(
            f"strain quotient {q:.3e} exceeds tolerance {tol:.3e}")
    skew = recover_rotation_field(surface, field)
    dwu = np.einsum("ij,jkc->ikc", surface.Du, skew.axial)
    dwv = np.einsum("ij,kjc->kic", surface.Dv, skew.axial)
    dw = np.stack([dwu, dwv], axis=-1)
    n = surface.normal
    out = np.empty(surface.shape + (2, 2))
    for i in range(2):
        for j in range(2):
            out[..., i, j] = np.einsum(
                "...c,...c->...", surface.jac[..., :, i],
                np.cross(dw[..., :, j], n))
    return sym2(out)


# ---------------------------------------------------------------------------
# metric expansion and isometry order
# ---------------------------------------------------------------------------

def metric_expansion(surface, hierarchy, k=None):
    """Coefficients A_1..A_k of the eps-expansion of the pullback metric.

    The metric defect of ``id + sum eps^i V_i`` is a polynomial in eps with
    symmetric 2x2 coefficients ``A_i = sum_{j+l=i} (grad w_j)^T grad w_l``
    (``w_0 = id``); the assembly is exact pairwise bookkeeping, no fitting.
    """
    N = hierarchy.order
    k = 2 * N if k is None else int(k)
    if k > 2 * N:
        raise OrderTooHigh(f"requested order {k} exceeds 2N = {2 * N}")
    jacs = [surface.jac] + [f.jac for f in hierarchy.fields]
    out = []
    for i in range(1, k + 1):
        Ai = np.zeros(surface.shape + (2, 2))
        for j in range(max(0, i - N), min(i, N) + 1):
            l = i - j
            Ai += np.einsum("...ca,...cb->...ab", jacs[j], jacs[l])
        out.append(Ai)
    return out


class IsometryOrderResult:
    def __init__(self, order, slope, fit_residual, eps, defects, at_noise_floor):
        self.order = order
        self.slope = slope
        self.fit_residual = fit_residual
        self.eps = np.asarray(eps)
        self.defects = np.asarray(defects)
        self.at_noise_floor = at_noise_floor

    def to_dict(self):
        return {
            "order": self.order,
            "slope": self.slope,
            "fit_residual": self.fit_residual,
            "eps": self.eps.tolist(),
            "defects": self.defects.tolist(),
            "at_noise_floor": self.at_noise_floor,
        }


def metric_defect_norm(surface, y, reference=None):
    """L2 norm of the pullback-metric defect of a deformation."""
    G = pullback_metric(surface, y)
    g0 = surface.g if reference is None else reference
    return float(np.sqrt(np.sum(surface.node_mass * frob2_sym(G - g0))))


def isometry_order(surface, hierarchy, eps_values=DEFAULT_EPS_SWEEP,
                   order_cap=12, residual_tol=0.25):
    """Estimate the isometry order from an eps-sweep of the metric defect.

    Accepts a :class:`DisplacementHierarchy` or a callable ``eps -> y``.
    Returns the largest N with defect = O(eps^{N+1}); if every defect sits
    at the noise floor the sweep cap is reported instead.
    """
    if isinstance(hierarchy, DisplacementHierarchy):
        family = hierarchy.deformation
    else:
        family = hierarchy
    eps_values = np.asarray(sorted(eps_values, reverse=True), dtype=float)
    defects = np.array([metric_defect_norm(surface, family(e))
                        for e in eps_values])
    scale = np.sqrt(surface.area) * max(1.0, float(np.abs(surface.g).max()))
    floor = 1e-13 * scale
    if np.all(defects <= floor):
        return IsometryOrderResult(order_cap, None, 0.0, eps_values, defects, True)
    mask = defects > floor
    if mask.sum() < 3:
        raise InconclusiveFit("fewer than 3 defects above the noise floor")
    x = np.log(eps_values[mask])
    ylog = np.log(defects[mask])
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, ylog, rcond=None)
    slope = float(coef[0])
    resid = float(np.sqrt(np.mean((A @ coef - ylog) ** 2)))
    if resid > residual_tol:
        raise InconclusiveFit(
            f"log-log fit residual {resid:.3f} exceeds {residual_tol}")
    order = int(round(slope)) - 1
    return IsometryOrderResult(order, slope, resid, eps_values, defects, False)


# ---------------------------------------------------------------------------
# sparse strain operator (shared by the eigen-solver and the projections)
# ---------------------------------------------------------------------------

def _gradient_ops(surface):
    n1, n2 = surface.shape
    Gu = sparse.kron(sparse.csr_matrix(surface.Du), sparse.identity(n2),
                     format="csr")
    Gv = sparse.kron(sparse.identity(n1), sparse.csr_matrix(surface.Dv),
                     format="csr")
    return Gu, Gv


def _component_selectors(N):
    ones = np.ones(N)
    rows = np.arange(N)
    return [sparse.csr_matrix((ones, (rows, rows * 3 + c)), shape=(N, 3 * N))
            for c in range(3)]


def strain_operator_blocks(surface, tangents=None):
    """Sparse blocks (s11, s12, s22) of w -> sym(t_i . d_j w) per node.

    ``tangents``: (n1, n2, 3, 2); defaults to the patch FD tangents.
    Unknown layout: node-major, 3 components per node.
    """
    t = surface.tangents_disc if tangents is None else tangents
    n1, n2 = surface.shape
    N = n1 * n2
    Gu, Gv = _gradient_ops(surface)
    sel = _component_selectors(N)
    t1 = t[..., 0].reshape(N, 3)
    t2 = t[..., 1].reshape(N, 3)
    s11 = sparse.csr_matrix((N, 3 * N))
    s12 = sparse.csr_matrix((N, 3 * N))
    s22 = sparse.csr_matrix((N, 3 * N))
    for c in range(3):
        D1c = sparse.diags(t1[:, c])
        D2c = sparse.diags(t2[:, c])
        GuC = Gu @ sel[c]
        GvC = Gv @ sel[c]
        s11 = s11 + D1c @ GuC
        s22 = s22 + D2c @ GvC
        s12 = s12 + 0.5 * (D1c @ GvC + D2c @ GuC)
    return s11.tocsr(), s12.tocsr(), s22.tocsr()


def _orthonormal_mix(surface, blocks, discrete=True):
    """Apply the pointwise g^{-1/2} (.) g^{-1/2} congruence to strain blocks."""
    g = surface.g_disc if discrete else surface.g
    P = spd_inv_sqrt_2x2(g).reshape(-1, 2, 2)
    p11, p12, p22 = P[:, 0, 0], P[:, 0, 1], P[:, 1, 1]
    T = [
        [p11 * p11, 2 * p11 * p12, p12 * p12],
        [p11 * p12, p11 * p22 + p12 * p12, p12 * p22],
        [p12 * p12, 2 * p12 * p22, p22 * p22],
    ]
    out = []
    for i in range(3):
        acc = sparse.csr_matrix(blocks[0].shape)
        for j in range(3):
            acc = acc + sparse.diags(T[i][j]) @ blocks[j]
        out.append(acc.tocsr())
    return out


def _weighted_rows(surface, blocks):
    """Stack strain blocks scaled by sqrt(mass * frobenius weight)."""
    m = surface.node_mass.ravel()
    w = [np.sqrt(m), np.sqrt(2.0 * m), np.sqrt(m)]
    return sparse.vstack([sparse.diags(w[i]) @ blocks[i] for i in range(3)],
                         format="csr")


def _rigid_basis(surface):
    cols = [f.values.ravel() for f in rigid_motion_fields(surface)]
    return np.stack(cols, axis=1)


class IsometryModes:
    """Result of the infinitesimal-isometry eigen-solve."""

    def __init__(self, fields, quotients):
        self.fields = fields
        self.quotients = np.asarray(quotients, dtype=float)


def solve_infinitesimal_isometries(surface, k=6, bc="free", deflate_rigid=True,
                                   method="eigh"):
    """Lowest modes of the linearized-strain quadratic form.

    Assembles the mass-weighted strain form (orthonormal-frame Frobenius
    norm, FD tangents), deflates the six sampled rigid motions by explicit
    orthogonalization, and returns the k lowest generalized eigenmodes with
    their Rayleigh quotients.  Modes whose quotient falls below
    :func:`v1_tolerance` are numerically infinitesimal isometries.

    ``method='eigh'`` solves the dense symmetric eigenproblem; its absolute
    eigenvalue floor is of order eps * ||form||.  ``method='svd'`` instead
    takes the smallest singular vectors of the weighted strain matrix,
    which resolves quotients all the way down to rounding level; on free
    elliptic caps this route exposes the genuinely flexible part of the
    discrete kernel beyond the rigid motions (free caps are not
    infinitesimally rigid), which is what the matching experiments feed on.
    """
    n1, n2 = surface.shape
    N = n1 * n2
    ndof = 3 * N
    if ndof > 8200:
        raise SolverFailure(
            f"dense solver limited to 8200 dofs, got {ndof}; use a smaller grid")
    blocks = _orthonormal_mix(surface, strain_operator_blocks(surface))
    S = _weighted_rows(surface, blocks)
    mass = np.repeat(surface.node_mass.ravel(), 3)

    idx = None
    if bc == "clamped-edge":
        interior = np.zeros((n1, n2), dtype=bool)
        interior[1:-1, 1:-1] = True
        idx = np.flatnonzero(np.repeat(interior.ravel(), 3))
        S = S[:, idx]
        mass = mass[idx]
    elif bc != "free":
        raise ValueError(f"unknown boundary condition {bc!r}")

    msqrt = np.sqrt(mass)
    Shat = (S @ sparse.diags(1.0 / msqrt)).toarray()

    basis = None
    if bc == "free" and deflate_rigid:
        R = _rigid_basis(surface) * msqrt[:, None]
        Qfull, _ = np.linalg.qr(R, mode="complete")
        basis = Qfull[:, R.shape[1]:]  # orthonormal complement of rigid span
        Shat = Shat @ basis

    k = min(int(k), Shat.shape[1])
    try:
        if method == "svd":
            _, _, Vt = np.linalg.svd(Shat, full_matrices=False)
            vecs = Vt[: -k - 1 : -1].T  # k smallest, ascending
        elif method == "eigh":
            A = Shat.T @ Shat
            _, vecs = eigh(A, subset_by_index=[0, k - 1])
        else:
            raise ValueError(f"unknown method {method!r}")
    except ValueError:
        raise
    except Exception as exc:  # pragma: no cover
        raise SolverFailure(f"mode solver failed: {exc}") from exc

    fields = []
    quotients = []
    for j in range(k):
        y = vecs[:, j]
        if basis is not None:
            y = basis @ y
        y = y / msqrt
        if idx is not None:
            full = np.zeros(ndof)
            full[idx] = y
            y = full
        # deterministic sign: largest-magnitude entry positive
        p = int(np.argmax(np.abs(y)))
        if y[p] < 0:
            y = -y
        f = DisplacementField.from_arrays(surface, y.reshape(n1, n2, 3))
        fields.append(f)
        quotients.append(strain_quotient(surface, f))
    return IsometryModes(fields, np.asarray(quotients))


# ---------------------------------------------------------------------------
# finite strain space membership
# ---------------------------------------------------------------------------

def finite_strain_project(surface, strain, reg=1e-12):
    """Least-squares displacement whose tangential strain matches a target.

    Solves ``min_w || sym(t_i . d_j w) - B ||_{L2}`` on the grid (FD
    operator, tiny Tikhonov term to fix the rigid/out-of-kernel component)
    and reports the optimal residual.  A residual that keeps shrinking
    under grid refinement certifies membership of B in the finite strain
    space at the discrete level.
    """
    B = strain.tensor if isinstance(strain, StrainField) else np.asarray(strain)
    n1, n2 = surface.shape
    N = n1 * n2
    blocks = strain_operator_blocks(surface)
    S = _weighted_rows(surface, blocks)
    m = surface.node_mass.ravel()
    w = [np.sqrt(m), np.sqrt(2.0 * m), np.sqrt(m)]
    b = np.concatenate([w[0] * B[..., 0, 0].ravel(),
                        w[1] * B[..., 0, 1].ravel(),
                        w[2] * B[..., 1, 1].ravel()])
    QtQ = (S.T @ S).tocsc()
    scale = QtQ.diagonal().mean()
    mass_diag = sparse.diags(np.repeat(m, 3))
    try:
        sol = splinalg.spsolve(QtQ + reg * scale * mass_diag, S.T @ b)
    except Exception as exc:
        raise SolverFailure(f"projection solve failed: {exc}") from exc
    wfield = DisplacementField.from_arrays(surface, sol.reshape(n1, n2, 3))
    fit = tangential_strain(surface, wfield, discrete=True)
    resid = float(np.sqrt(np.sum(surface.node_mass * frob2_sym(fit - B))))
    return wfield, resid


# ---------------------------------------------------------------------------
# plate second-order characterization
# ---------------------------------------------------------------------------

def plate_second_order_check(field, tol=1e-8):
    """Check the plate characterization of second-order isometries.

    Conditions: the in-plane part is a linearized rigid in-plane motion and
    the Hessian determinant of the out-of-plane component vanishes.
    Returns a dict with both residuals and the verdict.
    """
    surface = field.patch
    if surface.family != "plate":
        raise NotAPlate(f"surface family {surface.family!r} is not a plate")
    hess3 = field.hess[..., 2, :, :]
    det = hess3[..., 0, 0] * hess3[..., 1, 1] - hess3[..., 0, 1] * hess3[..., 1, 0]
    max_det = float(np.abs(det).max())

    # fit (V1, V2) = omega * (-v, u) + (b1, b2)
    U, V = surface.U.ravel(), surface.V.ravel()
    v1, v2 = field.values[..., 0].ravel(), field.values[..., 1].ravel()
    A = np.zeros((2 * len(U), 3))
    A[: len(U), 0] = -V
    A[: len(U), 1] = 1.0
    A[len(U):, 0] = U
    A[len(U):, 2] = 1.0
    rhs = np.concatenate([v1, v2])
    coef, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    inplane_resid = float(np.abs(A @ coef - rhs).max())

    scale = 1.0 + float(np.abs(field.values).max())
    in_v2 = (max_det <= tol * scale) and (inplane_resid <= tol * scale)
    return {
        "in_V2": bool(in_v2),
        "max_abs_det_hessian": max_det,
        "inplane_rigid_residual": inplane_resid,
        "omega_b": coef.tolist(),
    }
