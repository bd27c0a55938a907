"""Saint Venant-Kirchhoff stored energy and its induced quadratic forms.

The density ``W(F) = (mu/4)|F^T F - I|^2 + (lambda/8) tr(F^T F - I)^2`` is
frame indifferent, vanishes exactly on rotations, and grows quadratically
with the distance to the rotation group near identity.  Being quadratic in
the Green strain it yields closed-form second-differential forms, which the
relaxed (numerically minimized) route cross-checks.
"""

import numpy as np

from .errors import BadDescriptor
from .gridutil import sym2


class Material:
    """Isotropic Saint Venant-Kirchhoff material.

    Parameters
    ----------
    mu : shear modulus, > 0
    lam : first Lame modulus, with 2*mu + lam > 0
    """

    def __init__(self, mu=1.0, lam=1.0):
        mu = float(mu)
        lam = float(lam)
        if mu <= 0 or 2 * mu + lam <= 0:
            raise BadDescriptor(f"inadmissible moduli mu={mu}, lambda={lam}")
        self.mu = mu
        self.lam = lam

    def __repr__(self):
        return f"Material(mu={self.mu}, lam={self.lam})"

    def to_dict(self):
        return {"mu": self.mu, "lambda": self.lam}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("mu", 1.0), d.get("lambda", d.get("lam", 1.0)))


def energy_density(material, F):
    """Stored energy W(F); broadcasts over leading axes of F (...,3,3)."""
    F = np.asarray(F, dtype=float)
    C = np.einsum("...ki,...kj->...ij", F, F)
    E = C - np.eye(3)
    frob = np.einsum("...ij,...ij->...", E, E)
    tr = np.trace(E, axis1=-2, axis2=-1)
    out = 0.25 * material.mu * frob + 0.125 * material.lam * tr ** 2
    return float(out) if out.ndim == 0 else out


def hessian_quadratic_form(material, F):
    """Quadratic form of the second differential of W at the identity.

    Equals ``2 mu |sym F|^2 + lambda (tr F)^2``; vanishes on antisymmetric
    arguments and is positive definite on symmetric ones.
    """
    F = np.asarray(F, dtype=float)
    S = sym2(F)
    frob = np.einsum("...ij,...ij->...", S, S)
    tr = np.trace(F, axis1=-2, axis2=-1)
    out = 2.0 * material.mu * frob + material.lam * tr ** 2
    return float(out) if out.ndim == 0 else out


def fd_hessian_quadratic_form(material, F, step=1e-4):
    """Second-order finite-difference probe of the same quadratic form."""
    F = np.asarray(F, dtype=float)
    I = np.eye(3)
    wp = energy_density(material, I + step * F)
    wm = energy_density(material, I - step * F)
    return (wp + wm) / step ** 2


def _embed_tangential(F_tan):
    F_tan = np.asarray(F_tan, dtype=float)
    out = np.zeros(F_tan.shape[:-2] + (3, 3))
    out[..., :2, :2] = F_tan
    return out


# symmetric basis of the free (normal) entries in the relaxation
_NORMAL_BASIS = np.zeros((3, 3, 3))
_NORMAL_BASIS[0, 0, 2] = _NORMAL_BASIS[0, 2, 0] = 1.0
_NORMAL_BASIS[1, 1, 2] = _NORMAL_BASIS[1, 2, 1] = 1.0
_NORMAL_BASIS[2, 2, 2] = 1.0


def _relaxation_system(material):
    """Gram matrix of the normal-entry basis, built by polarization of the
    quadratic form (kept independent of the closed-form reduced moduli)."""
    H = np.empty((3, 3))
    for k in range(3):
        for l in range(3):
            H[k, l] = 0.25 * (
                hessian_quadratic_form(material, _NORMAL_BASIS[k] + _NORMAL_BASIS[l])
                - hessian_quadratic_form(material, _NORMAL_BASIS[k] - _NORMAL_BASIS[l])
            )
    return H


def optimal_extension(material, F_tan):
    """Minimizer of the full quadratic form over extensions of F_tan.

    Returns the symmetric 3x3 matrix with the prescribed tangential minor
    (symmetrized) and energy-optimal normal entries.  Broadcasts over
    leading axes.
    """
    S0 = sym2(_embed_tangential(F_tan))
    H = _relaxation_system(material)
    rhs = np.empty(S0.shape[:-2] + (3,))
    for k in range(3):
        rhs[..., k] = 0.25 * (
            hessian_quadratic_form(material, S0 + _NORMAL_BASIS[k])
            - hessian_quadratic_form(material, S0 - _NORMAL_BASIS[k])
        )
    x = np.linalg.solve(H, -rhs[..., None])[..., 0]
    return S0 + np.einsum("...k,kij->...ij", x, _NORMAL_BASIS)


def reduced_quadratic_form(material, F_tan, mode="analytic"):
    """Quadratic form relaxed over the normal column/row.

    ``analytic`` uses the closed-form reduced moduli
    ``2 mu |sym F|^2 + (2 mu lambda/(2 mu + lambda)) (tr F)^2``;
    ``relaxed`` minimizes the full form over extensions numerically.
    Both agree to 1e-10.
    """
    F_tan = np.asarray(F_tan, dtype=float)
    if mode == "analytic":
        S = sym2(F_tan)
        frob = np.einsum("...ij,...ij->...", S, S)
        tr = np.trace(F_tan, axis1=-2, axis2=-1)
        coeff = 2.0 * material.mu * material.lam / (2.0 * material.mu + material.lam)
        out = 2.0 * material.mu * frob + coeff * tr ** 2
        return float(out) if out.ndim == 0 else out
    if mode == "relaxed":
        return hessian_quadratic_form(material, optimal_extension(material, F_tan))
    raise ValueError(f"unknown mode {mode!r}")


# -- sampling utilities used by the axiom checks --------------------------


def rotation_samples(n, rng):
    """n rotations from uniformly sampled axis and angle (Rodrigues)."""
    axis = rng.normal(size=(n, 3))
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    angle = rng.uniform(0.0, 2 * np.pi, size=n)
    K = np.zeros((n, 3, 3))
    K[:, 0, 1] = -axis[:, 2]
    K[:, 0, 2] = axis[:, 1]
    K[:, 1, 2] = -axis[:, 0]
    K -= np.swapaxes(K, 1, 2)
    I = np.eye(3)
    return (I + np.sin(angle)[:, None, None] * K
            + (1 - np.cos(angle))[:, None, None] * (K @ K))


def distance_to_rotations(F):
    """Frobenius distance of F (...,3,3) to the rotation group."""
    U, s, Vt = np.linalg.svd(np.asarray(F, dtype=float))
    det = np.linalg.det(U @ Vt)
    R = U @ Vt
    flip = det < 0
    if np.any(flip):
        Uf = U.copy()
        Uf[flip, :, 2] *= -1
        R = np.where(flip[..., None, None], Uf @ Vt, R)
    d = np.linalg.norm(F - R, axis=(-2, -1))
    return float(d) if d.ndim == 0 else d


def material_axiom_report(material, n_rotations=1000, n_pairs=10000, seed=0):
    """Sampled probes of frame indifference, normalization, nondegeneracy.

    Returns a dict of worst-case residuals/ratios over the sample.
    """
    rng = np.random.default_rng(seed)
    R = rotation_samples(n_rotations, rng)
    w_rot = np.abs(energy_density(material, R)).max()

    Rp = rotation_samples(n_pairs, rng)
    F = np.eye(3) + rng.uniform(-0.5, 0.5, size=(n_pairs, 3, 3)) / 3.0
    fi = np.abs(energy_density(material, Rp @ F) - energy_density(material, F)).max()

    Q = rotation_samples(n_pairs, rng)
    P = rng.normal(size=(n_pairs, 3, 3))
    P *= (rng.uniform(0.05, 0.5, size=n_pairs)
          / np.linalg.norm(P, axis=(1, 2)))[:, None, None]
    Fnd = Q + P
    d2 = distance_to_rotations(Fnd) ** 2
    ratio = energy_density(material, Fnd) / d2
    return {
        "rotation_energy_max": float(w_rot),
        "frame_indifference_max": float(fi),
        "nondegeneracy_ratio_min": float(ratio.min()),
        "samples": {"rotations": n_rotations, "pairs": n_pairs, "seed": seed},
    }
