"""Scaling-law studies, recovery sequences, and the matching Newton solver.

The force/energy exponent map and the order classifier are exact closed
forms; everything else is a runnable experiment: build a thin-shell
deformation family for a regime, sweep the thickness, fit the exponent,
extrapolate the limit, and compare against the matching 2D functional.
"""

import math

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as splinalg

from .errors import (
    ConstraintViolated,
    NegativeAlpha,
    NewtonDiverged,
    NotAnIsometry,
    NotElliptic,
    OutOfRegime,
)
from .fields import (
    DisplacementField,
    MidsurfaceDeformation,
    SurfaceField,
    combine,
)
from .functionals import ThinShellAnsatz, thin_shell_energy
from .geometry import _frame_from_jac, ellipticity_check
from .gridutil import frob2_sym, spd_inv_sqrt_2x2, spd_sqrt_2x2, sym2
from .kinematics import (
    _component_selectors,
    cell_difference_ops,
    metric_defect_norm,
    pullback_metric,
    pullback_shape,
    strain_quotient,
    v1_tolerance,
)
from .material import optimal_extension, reduced_quadratic_form


# ---------------------------------------------------------------------------
# scaling classifiers
# ---------------------------------------------------------------------------

def alpha_to_beta(alpha):
    """Energy exponent of minimizers under forces scaling like h^alpha."""
    if alpha < 0:
        raise NegativeAlpha(f"force exponent must be >= 0, got {alpha}")
    return float(alpha) if alpha <= 2 else 2.0 * float(alpha) - 2.0


def order_for_scaling(beta):
    """Isometry order N governing the regime of a scaling exponent beta > 2.

    N is the smallest integer with beta >= 2 + 2/N; the regime bracket is
    [2 + 2/N, 2 + 2/(N-1)) with the N = 1 threshold at infinity.
    """
    if beta <= 2:
        raise OutOfRegime(f"scaling hierarchy needs beta > 2, got {beta}")
    N = max(1, math.ceil(2.0 / (beta - 2.0) - 1e-12))
    beta_N = math.inf if N == 1 else 2.0 + 2.0 / (N - 1)
    beta_N1 = 2.0 + 2.0 / N
    return {"N": N, "beta_N": beta_N, "beta_N1": beta_N1}


# ---------------------------------------------------------------------------
# recovery sequences
# ---------------------------------------------------------------------------

def _relaxed_ansatz(surface, material, y):
    """Thin-shell ansatz over mid-deformation y with optimal fiber terms.

    The first fiber coefficient tilts the deformed normal so the
    thickness-constant strain attains the relaxed quadratic form pointwise;
    the second does the same for the thickness-linear (bending) strain.
    Both come from the material's extension minimizer, not from hand-coded
    formulas.
    """
    g = surface.g
    gis = spd_inv_sqrt_2x2(g)
    gsq = spd_sqrt_2x2(g)
    nhat, _, cross = _frame_from_jac(y.jac, y.hess, surface.orientation)
    gy = pullback_metric(surface, y)

    # fiber-constant strain: relax the normal entries via c1
    m0_tan = gy - g
    T0 = optimal_extension(material, 0.5 * (gis @ m0_tan @ gis))
    m0_n = 2.0 * np.einsum("...ij,...j->...i", gsq, T0[..., :2, 2])
    m0_33 = 2.0 * T0[..., 2, 2]
    beta = np.linalg.solve(gy, m0_n[..., None])[..., 0]
    rad = 1.0 + m0_33 - np.einsum("...i,...ij,...j->...", beta, gy, beta)
    if rad.min() <= 0:
        raise ConstraintViolated(
            "mid-surface strain too large for a unit-length director")
    c1_vals = np.einsum("...ci,...i->...c", y.jac, beta) + np.sqrt(rad)[..., None] * nhat
    c1 = SurfaceField.from_arrays(surface, c1_vals)

    # fiber-linear strain: relax via c2
    m1_tan = 2.0 * sym2(np.einsum("...ci,...cj->...ij", y.jac, c1.jac)) - 2.0 * surface.b
    T1 = optimal_extension(material, 0.5 * (gis @ m1_tan @ gis))
    m1_n = 2.0 * np.einsum("...ij,...j->...i", gsq, T1[..., :2, 2])
    m1_33 = 2.0 * T1[..., 2, 2]
    dc1_dot_c1 = np.einsum("...cj,...c->...j", c1.jac, c1_vals)
    rows = np.stack([y.jac[..., :, 0], y.jac[..., :, 1], c1_vals], axis=-2)
    rhs = np.stack([0.5 * (m1_n[..., 0] - dc1_dot_c1[..., 0]),
                    0.5 * (m1_n[..., 1] - dc1_dot_c1[..., 1]),
                    0.25 * m1_33], axis=-1)
    c2_vals = np.linalg.solve(rows, rhs[..., None])[..., 0]
    c2 = SurfaceField.from_arrays(surface, c2_vals)
    return ThinShellAnsatz([y, c1, c2])


def eps_for_scaling(h, beta):
    """Mid-surface displacement amplitude for an h-sweep at exponent beta."""
    return h ** (beta / 2.0 - 1.0)


def build_recovery_sequence(surface, material, regime, h,
                            matching_tol=1e-10):
    """Thin-shell ansatz realizing a regime's limit energy at thickness h.

    ``regime`` is a dict: ``{"kind": "kirchhoff", "y": deformation}`` |
    ``{"kind": "vonkarman", "V": field, "w": field|None, "beta": 4}`` |
    ``{"kind": "linear", "V": field, "beta": >4}`` |
    ``{"kind": "intermediate", "V": field, "beta": in (2,4)}``.
    Validity is certified a posteriori by the scaling study, not assumed.
    """
    kind = regime["kind"]
    if kind == "kirchhoff":
        y = regime["y"]
        defect = metric_defect_norm(surface, y)
        if defect > 1e-6 * surface.area:
            raise ConstraintViolated(
                f"kirchhoff regime needs an isometry; defect {defect:.3e}")
        return _relaxed_ansatz(surface, material, y)

    V = regime["V"]
    q = strain_quotient(surface, V)
    if q > v1_tolerance(surface):
        raise ConstraintViolated(
            f"displacement is not numerically an infinitesimal isometry "
            f"(quotient {q:.3e})")
    beta = float(regime.get("beta", 4.0))
    eps = eps_for_scaling(h, beta)
    if kind == "vonkarman":
        if abs(beta - 4.0) > 1e-12:
            raise ConstraintViolated("vonkarman regime means beta = 4")
        pairs = [(1.0, MidsurfaceDeformation.identity(surface)), (eps, V)]
        w = regime.get("w")
        if w is not None:
            pairs.append((eps ** 2, w))
        y = combine(surface, pairs, cls=MidsurfaceDeformation)
        return _relaxed_ansatz(surface, material, y)
    if kind == "linear":
        if beta <= 4.0:
            raise ConstraintViolated("linear regime means beta > 4")
        y = combine(surface, [(1.0, MidsurfaceDeformation.identity(surface)),
                              (eps, V)], cls=MidsurfaceDeformation)
        return _relaxed_ansatz(surface, material, y)
    if kind == "intermediate":
        if not (2.0 < beta < 4.0):
            raise ConstraintViolated("intermediate regime means 2 < beta < 4")
        w, _ = matching_solve(surface, V, eps, tol=matching_tol)
        y = combine(surface, [(1.0, MidsurfaceDeformation.identity(surface)),
                              (eps, V), (eps ** 2, w)],
                    cls=MidsurfaceDeformation)
        return _relaxed_ansatz(surface, material, y)
    raise ConstraintViolated(f"unknown regime kind {kind!r}")


# ---------------------------------------------------------------------------
# h-sweeps
# ---------------------------------------------------------------------------

def richardson_extrapolate(h_values, values):
    """Limit estimate from the three finest levels of a geometric sweep.

    The convergence order is estimated from the level differences (the
    three-level consistency check); an implausible estimate falls back to
    first order.  Returns (limit, order_used).
    """
    h = np.asarray(h_values, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(h) < 3:
        return float(y[-1]), 1.0
    h1, h2, h3 = h[-3:]
    y1, y2, y3 = y[-3:]
    r = h2 / h3
    p = 1.0
    d12 = y1 - y2
    d23 = y2 - y3
    if d23 != 0 and d12 / d23 > 0 and abs(h1 / h2 - r) < 1e-8 * r:
        est = math.log(d12 / d23) / math.log(h1 / h2)
        if 0.4 <= est <= 6.0:
            p = est
    return float(y3 + (y3 - y2) / (r ** p - 1.0)), p


class ScalingReport:
    """Result of an h-sweep: energies, fitted exponent, limit comparison."""

    def __init__(self, h_values, energies, beta_hat, fit_residual,
                 degenerate, stretching, bending, target=None,
                 scaled_energies=None, extrapolated=None, order_used=None,
                 relative_errors=None):
        self.h_values = list(map(float, h_values))
        self.energies = list(map(float, energies))
        self.beta_hat = beta_hat
        self.fit_residual = fit_residual
        self.degenerate = degenerate
        self.stretching = stretching
        self.bending = bending
        self.target = target
        self.scaled_energies = scaled_energies
        self.extrapolated = extrapolated
        self.order_used = order_used
        self.relative_errors = relative_errors

    def to_dict(self):
        return {
            "h": self.h_values,
            "energy": self.energies,
            "beta_hat": self.beta_hat,
            "fit_residual": self.fit_residual,
            "degenerate": self.degenerate,
            "stretching": self.stretching,
            "bending": self.bending,
            "target": self.target,
            "energy_over_h_beta": self.scaled_energies,
            "extrapolated_limit": self.extrapolated,
            "richardson_order": self.order_used,
            "relative_errors": self.relative_errors,
        }

    def csv_rows(self):
        rows = []
        for i, h in enumerate(self.h_values):
            rows.append({
                "h": h,
                "E_h": self.energies[i],
                "E_h_over_h_beta": (self.scaled_energies[i]
                                    if self.scaled_energies else ""),
                "stretching": self.stretching[i] if self.stretching else "",
                "bending": self.bending[i] if self.bending else "",
            })
        return rows


MACHINE_ZERO_ENERGY = 1e-14


def scaling_study(surface, material, sequence, h_values, target=None,
                  t_points=3, with_equipartition=True):
    """Evaluate a thin-shell family over an h-sweep and fit the exponent.

    ``sequence``: callable h -> ThinShellAnsatz.  ``target``: optional dict
    with keys ``beta`` and either ``value`` or ``values`` (a dict of
    labelled candidates, each compared to the extrapolated limit).
    Degenerate sweeps (all energies at machine zero) are flagged, not fit.
    """
    h_values = sorted(map(float, h_values), reverse=True)
    if len(h_values) < 4:
        raise ValueError("h sweep needs at least 4 values")
    energies = []
    stretching = []
    bending = []
    for h in h_values:
        ansatz = sequence(h)
        energies.append(thin_shell_energy(surface, material, ansatz, h,
                                          t_points=t_points))
        if with_equipartition:
            rep = equipartition_report(surface, material, ansatz, h,
                                       t_points=t_points, energy=energies[-1])
            stretching.append(rep["stretching"])
            bending.append(rep["bending"])
    energies = np.asarray(energies)
    if np.all(energies <= MACHINE_ZERO_ENERGY):
        return ScalingReport(h_values, energies, None, None, True,
                             stretching or None, bending or None, target)
    x = np.log(np.asarray(h_values))
    ylog = np.log(energies)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, ylog, rcond=None)
    beta_hat = float(coef[0])
    fit_residual = float(np.sqrt(np.mean((A @ coef - ylog) ** 2)))

    scaled = extrap = order = rel = None
    if target is not None:
        tb = float(target["beta"])
        scaled = (energies / np.asarray(h_values) ** tb).tolist()
        extrap, order = richardson_extrapolate(h_values, scaled)
        cands = target.get("values")
        if cands is None and "value" in target:
            cands = {"target": target["value"]}
        if cands:
            rel = {k: abs(extrap - v) / max(abs(v), 1e-300)
                   for k, v in cands.items()}
    return ScalingReport(h_values, energies, beta_hat, fit_residual, False,
                         stretching or None, bending or None, target,
                         scaled, extrap, order, rel)


# ---------------------------------------------------------------------------
# matching property (Newton continuation to an exact isometry)
# ---------------------------------------------------------------------------

def _cell_system(surface):
    """Cell operators, component selectors, and mass weights for matching."""
    n1, n2 = surface.shape
    N = n1 * n2
    Tu, Tv, Avg = cell_difference_ops(surface)
    sel = _component_selectors(N)
    mc = surface.du * surface.dv * (Avg @ surface.sqrt_g.ravel())
    wrow = np.concatenate([np.sqrt(mc), np.sqrt(2.0 * mc), np.sqrt(mc)])
    return Tu, Tv, sel, wrow


def _cell_metric_comps(Tu, Tv, yvals):
    flat = yvals.reshape(-1, 3)
    tu = Tu @ flat
    tv = Tv @ flat
    return (tu, tv,
            np.einsum("nc,nc->n", tu, tu),
            np.einsum("nc,nc->n", tu, tv),
            np.einsum("nc,nc->n", tv, tv))


def matching_solve(surface, V, eps, tol=1e-10, max_iter=40):
    """Correction w with id + eps V + eps^2 w an exact discrete isometry.

    The isometry system is collocated at cell midpoints (edge-average
    difference metric against the same discrete metric of the chart): every
    cell is constrained, rigid-motion inputs are solvable exactly by
    construction, and the system is mildly underdetermined, so Newton with
    a damped least-squares step (sparse normal equations, tiny Levenberg
    regularization standing in for minimum-norm/rigid deflation) converges
    quadratically.  Returns ``(w, info)``; the final defect is the
    mass-weighted L2 norm of the cell-metric residual, reproducible through
    ``pullback_metric(surface, w_deformation, where='cells')``.
    """
    if not ellipticity_check(surface).is_elliptic:
        raise NotElliptic("matching requires a uniformly elliptic surface")
    q = strain_quotient(surface, V)
    if q > v1_tolerance(surface):
        raise NotAnIsometry(
            f"strain quotient {q:.3e} exceeds {v1_tolerance(surface):.3e}")
    eps = float(eps)
    n1, n2 = surface.shape
    N = n1 * n2
    Tu, Tv, sel, wrow = _cell_system(surface)
    _, _, t11, t12, t22 = _cell_metric_comps(Tu, Tv, surface.r)
    base = surface.r + eps * V.values

    def defect_vec(w):
        _, _, g11, g12, g22 = _cell_metric_comps(Tu, Tv, base + eps ** 2 * w)
        return np.concatenate([g11 - t11, g12 - t12, g22 - t22]) * wrow

    w = np.zeros(surface.shape + (3,))
    res = defect_vec(w)
    defect = float(np.linalg.norm(res))
    trace = [defect]
    lam_rel = 1e-12
    for it in range(max_iter):
        if defect <= tol:
            info = {"defect": defect, "iterations": it, "trace": trace,
                    "eps": eps}
            return DisplacementField.from_arrays(surface, w), info
        tu, tv, _, _, _ = _cell_metric_comps(Tu, Tv, base + eps ** 2 * w)
        b11 = sum(sparse.diags(2.0 * tu[:, c]) @ Tu @ sel[c] for c in range(3))
        b22 = sum(sparse.diags(2.0 * tv[:, c]) @ Tv @ sel[c] for c in range(3))
        b12 = sum((sparse.diags(tu[:, c]) @ Tv
                   + sparse.diags(tv[:, c]) @ Tu) @ sel[c] for c in range(3))
        J = (sparse.diags(wrow)
             @ sparse.vstack([b11, b12, b22], format="csr")) * eps ** 2
        A = (J.T @ J).tocsc()
        lam = lam_rel * A.diagonal().mean()
        try:
            step = splinalg.spsolve(A + lam * sparse.identity(3 * N),
                                    -J.T @ res).reshape(n1, n2, 3)
        except Exception as exc:
            raise NewtonDiverged(f"linear solve failed: {exc}", trace) from exc
        alpha = 1.0
        for _ in range(40):
            cand = w + alpha * step
            cres = defect_vec(cand)
            cdef = float(np.linalg.norm(cres))
            if cdef < defect * (1.0 - 1e-4 * alpha) or cdef <= tol:
                w, res, defect = cand, cres, cdef
                break
            alpha *= 0.5
        else:
            raise NewtonDiverged(
                f"line search stalled at defect {defect:.3e}", trace)
        trace.append(defect)
    if defect <= tol:
        info = {"defect": defect, "iterations": max_iter, "trace": trace,
                "eps": eps}
        return DisplacementField.from_arrays(surface, w), info
    raise NewtonDiverged(
        f"defect {defect:.3e} above tol {tol:.1e} after {max_iter} iterations",
        trace)


class MatchingResult:
    """Matching corrections over an eps-sweep with equiboundedness data."""

    def __init__(self, eps_values, corrections, defects, iterations):
        self.eps_values = list(map(float, eps_values))
        self.corrections = corrections
        self.defects = list(map(float, defects))
        self.iterations = list(iterations)
        self.sup_norms = [w.sup_norm() for w in corrections]
        self.c2_norms = [
            float(np.abs(w.values).max() + np.abs(w.jac).max()
                  + np.abs(w.hess).max())
            for w in corrections
        ]

    @property
    def sup_ratios(self):
        s = self.sup_norms
        return [s[i + 1] / s[i] for i in range(len(s) - 1)]

    def to_dict(self):
        return {
            "eps": self.eps_values,
            "defects": self.defects,
            "iterations": self.iterations,
            "sup_norms": self.sup_norms,
            "c2_norms": self.c2_norms,
            "sup_ratios": self.sup_ratios,
        }


def matching_study(surface, V, eps_values, tol=1e-10):
    """Run :func:`matching_solve` across an eps-sweep."""
    corrections = []
    defects = []
    iterations = []
    for eps in eps_values:
        w, info = matching_solve(surface, V, eps, tol=tol)
        corrections.append(w)
        defects.append(info["defect"])
        iterations.append(info["iterations"])
    return MatchingResult(eps_values, corrections, defects, iterations)


# ---------------------------------------------------------------------------
# equipartition
# ---------------------------------------------------------------------------

def equipartition_report(surface, material, ansatz, h, t_points=3,
                         energy=None):
    """Stretching/bending split of the heuristic two-term shell energy.

    Reports the Frobenius-norm integrals of the metric change and (h^2
    times) the shape-tensor change of the mid-surface trace, the full
    thin-shell energy, and the relative gap to the quadratic-form-weighted
    version of the two-term heuristic.
    """
    from .geometry import surface_integral

    c0 = ansatz.midsurface
    gis = spd_inv_sqrt_2x2(surface.g)
    dg = gis @ (pullback_metric(surface, c0) - surface.g) @ gis
    db = gis @ (pullback_shape(surface, c0) - surface.b) @ gis
    stretching = surface_integral(surface, frob2_sym(dg))
    bending = h ** 2 * surface_integral(surface, frob2_sym(db))
    if energy is None:
        energy = thin_shell_energy(surface, material, ansatz, h,
                                   t_points=t_points)
    q_heuristic = (0.125 * surface_integral(
        surface, reduced_quadratic_form(material, dg))
        + h ** 2 / 24.0 * surface_integral(
            surface, reduced_quadratic_form(material, db)))
    gap = abs(energy - q_heuristic) / max(abs(energy), 1e-300)
    return {
        "stretching": float(stretching),
        "bending": float(bending),
        "energy": float(energy),
        "q_weighted_heuristic": float(q_heuristic),
        "heuristic_gap": float(gap),
    }
