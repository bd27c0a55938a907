"""Command-line entry point.

Grammar::

    shellhier <subcommand> --config <path> [--out <dir>] [--grid N]
              [--quad K] [--seed S]

Subcommands: ``surface show``, ``material check``, ``energy eval``,
``isometry solve``, ``classify``, ``match run``, ``scaling run``,
``equipartition run``.  Config files are JSON; every run echoes its fully
resolved configuration next to the outputs so it can be replayed from that
file alone.  Exit codes: 0 success, 1 validation/usage error, 2 solver
failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import (
    BadDescriptor,
    ConstraintViolated,
    FitDegenerate,
    InconclusiveFit,
    InsufficientOrder,
    NegativeAlpha,
    NewtonDiverged,
    NotAPlate,
    NotAnIsometry,
    NotElliptic,
    OrderTooHigh,
    OutOfDomain,
    OutOfRegime,
    SolverFailure,
    TubularViolation,
)
from .fields import DisplacementField, MidsurfaceDeformation, SurfaceField
from .functionals import (
    ForceSpec,
    ThinShellAnsatz,
    a2_tangential,
    kirchhoff_energy,
    linear_bending_energy,
    thin_shell_energy,
    total_energy,
    von_karman_energy,
)
from .geometry import build_surface, ellipticity_check, surface_integral
from .kinematics import (
    finite_strain_project,
    solve_infinitesimal_isometries,
    strain_quotient,
    tangential_strain,
    v1_tolerance,
)
from .material import (
    Material,
    fd_hessian_quadratic_form,
    hessian_quadratic_form,
    material_axiom_report,
    reduced_quadratic_form,
)
from .experiments import (
    alpha_to_beta,
    build_recovery_sequence,
    equipartition_report,
    matching_study,
    order_for_scaling,
    scaling_study,
)
from .reporting import SCHEMA_VERSION, emit_report

_VALIDATION_ERRORS = (BadDescriptor, OutOfDomain, NegativeAlpha, OutOfRegime,
                      OrderTooHigh, NotAPlate, KeyError, ValueError, TypeError,
                      OSError, json.JSONDecodeError)
_SOLVER_ERRORS = (SolverFailure, NewtonDiverged, InconclusiveFit,
                  NotAnIsometry, NotElliptic, ConstraintViolated,
                  InsufficientOrder, TubularViolation, FitDegenerate)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _common(parser):
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--out", help="output directory (default: ./out)")
    parser.add_argument("--grid", type=int, help="override grid to N x N")
    parser.add_argument("--quad", type=int, help="override quadrature points per cell")
    parser.add_argument("--seed", type=int, help="override sampling seed")
    parser.add_argument("--verbose", action="store_true")


def build_parser():
    p = _Parser(prog="shellhier", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="group", required=True)

    def leaf(group, action):
        g = sub.add_parser(group)
        s = g.add_subparsers(dest="action", required=True)
        a = s.add_parser(action)
        _common(a)
        return a

    leaf("surface", "show")
    leaf("material", "check")
    leaf("energy", "eval")
    leaf("isometry", "solve")
    leaf("match", "run")
    leaf("scaling", "run")
    leaf("equipartition", "run")
    c = sub.add_parser("classify")
    c.add_argument("--beta", type=float)
    c.add_argument("--alpha", type=float)
    _common(c)
    return p


# -- config helpers ----------------------------------------------------------


def _load_config(args):
    cfg = {}
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
    if args.grid:
        cfg.setdefault("surface", {})["grid"] = [args.grid, args.grid]
    if args.quad:
        cfg.setdefault("surface", {})["quad_points"] = args.quad
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _surface(cfg):
    desc = dict(cfg.get("surface") or {})
    desc.setdefault("family", "plate")
    return build_surface(desc)


def _material(cfg):
    return Material.from_dict(cfg.get("material", {"mu": 1.0, "lambda": 1.0}))


def _field(surface, spec, cls=DisplacementField):
    if spec in (None, "zero"):
        return cls.zero(surface)
    return cls.from_dict(surface, spec)


def _ansatz(surface, spec):
    kind = spec.get("kind", "identity")
    if kind == "identity":
        return ThinShellAnsatz.identity(surface)
    if kind == "coeffs":
        return ThinShellAnsatz([SurfaceField.from_dict(surface, c)
                                for c in spec["coeffs"]])
    raise BadDescriptor(f"unknown ansatz kind {kind!r}")


def _regime(surface, material, spec):
    """Resolve a regime config into build_recovery_sequence inputs."""
    kind = spec["kind"]
    if kind == "kirchhoff":
        return {"kind": kind,
                "y": _field(surface, spec["y"], MidsurfaceDeformation)}
    out = {"kind": kind, "V": _field(surface, spec["V"]),
           "beta": float(spec.get("beta", 4.0))}
    if kind == "vonkarman":
        w = spec.get("w")
        if w == "matched":
            out["w"], _ = finite_strain_project(
                surface, 0.5 * a2_tangential(surface, out["V"]))
        elif w is not None:
            out["w"] = _field(surface, w)
    return out


def _wrap_report(subcommand, resolved, results):
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "subcommand": subcommand,
        "config_echo": resolved,
        "results": results,
    }


def _write(args, subcommand, resolved, results, csv_columns=None,
           csv_rows=None, curves=None):
    outdir = args.out or "out"
    paths = emit_report(_wrap_report(subcommand, resolved, results), outdir,
                        csv_columns=csv_columns, csv_rows=csv_rows,
                        curves=curves)
    with open(os.path.join(outdir, "resolved_config.json"), "w") as fh:
        from .reporting import canonical_json

        fh.write(canonical_json(resolved))
    if args.verbose:
        for k, v in paths.items():
            print(f"wrote {k}: {v}")
    return paths


# -- subcommand handlers -----------------------------------------------------


def _cmd_surface_show(args, cfg):
    S = _surface(cfg)
    ortho = float(max(
        np.abs(np.einsum("...c,...c->...", S.normal, S.jac[..., :, 0])).max(),
        np.abs(np.einsum("...c,...c->...", S.normal, S.jac[..., :, 1])).max()))
    unit = float(np.abs(np.linalg.norm(S.normal, axis=-1) - 1.0).max())
    ell = ellipticity_check(S)
    results = {
        "area": surface_integral(S, 1.0),
        "kappa_min": float(S.kappa.min()),
        "kappa_max": float(S.kappa.max()),
        "ellipticity": ell.to_dict(),
        "normal_orthogonality_max": ortho,
        "normal_unit_defect_max": unit,
        "metric_spd_min_eig": float(np.linalg.eigvalsh(S.g).min()),
    }
    resolved = {"subcommand": "surface show", "surface": S.to_dict()}
    _write(args, "surface show", resolved, results)
    print(f"family={S.family} area={results['area']:.6g} "
          f"kappa=[{results['kappa_min']:.4g}, {results['kappa_max']:.4g}] "
          f"elliptic={ell.is_elliptic}")
    return 0


def _cmd_material_check(args, cfg):
    M = _material(cfg)
    samples = dict(cfg.get("samples", {}))
    samples.setdefault("n_rotations", 1000)
    samples.setdefault("n_pairs", 10000)
    samples.setdefault("seed", cfg.get("seed", 0))
    rep = material_axiom_report(M, **samples)
    rng = np.random.default_rng(samples["seed"])
    F_tan = rng.normal(size=(256, 2, 2))
    q_an = reduced_quadratic_form(M, F_tan, mode="analytic")
    q_rx = reduced_quadratic_form(M, F_tan, mode="relaxed")
    rep["reduced_form_consistency_max"] = float(
        np.abs(q_an - q_rx).max() / (1.0 + np.abs(q_an).max()))
    F3 = rng.normal(size=(64, 3, 3))
    h_cl = hessian_quadratic_form(M, F3)
    h_fd = np.array([fd_hessian_quadratic_form(M, f) for f in F3])
    rep["hessian_form_fd_relative_max"] = float(
        np.abs(h_cl - h_fd).max() / np.abs(h_cl).max())
    resolved = {"subcommand": "material check", "material": M.to_dict(),
                "samples": samples}
    _write(args, "material check", resolved, rep)
    print(f"mu={M.mu} lambda={M.lam} "
          f"frame_indifference_max={rep['frame_indifference_max']:.3e} "
          f"nondegeneracy_min={rep['nondegeneracy_ratio_min']:.3f}")
    return 0


def _cmd_energy_eval(args, cfg):
    S = _surface(cfg)
    M = _material(cfg)
    ansatz = _ansatz(S, cfg.get("ansatz", {"kind": "identity"}))
    h = float(cfg.get("h", 0.01))
    t_points = int(cfg.get("t_points", 3))
    results = {
        "h": h,
        "value": thin_shell_energy(S, M, ansatz, h, t_points=t_points),
        "quadrature": {"points_per_cell": S.quad_points, "t_points": t_points},
    }
    if "force" in cfg:
        fspec = cfg["force"]
        profile = fspec.get("profile", [0.0, 0.0, 1.0])
        if isinstance(profile, dict):
            profile = SurfaceField.from_dict(S, profile)
        force = ForceSpec(profile, alpha=float(fspec.get("alpha", 0.0)))
        results["total"] = total_energy(S, M, ansatz, h, force,
                                        t_points=t_points)
    resolved = {"subcommand": "energy eval", "surface": S.to_dict(),
                "material": M.to_dict(), "h": h, "t_points": t_points,
                "ansatz": cfg.get("ansatz", {"kind": "identity"}),
                **({"force": cfg["force"]} if "force" in cfg else {})}
    _write(args, "energy eval", resolved, results)
    print(f"E^h = {results['value']:.12g}" +
          (f", J^h = {results['total']:.12g}" if "total" in results else ""))
    return 0


def _cmd_isometry_solve(args, cfg):
    S = _surface(cfg)
    k = int(cfg.get("k", 6))
    bc = cfg.get("bc", "free")
    method = cfg.get("method", "eigh")
    modes = solve_infinitesimal_isometries(S, k=k, bc=bc, method=method)
    results = {
        "quotients": modes.quotients.tolist(),
        "v1_tolerance": v1_tolerance(S),
        "numerically_in_v1": [bool(q <= v1_tolerance(S))
                              for q in modes.quotients],
    }
    resolved = {"subcommand": "isometry solve", "surface": S.to_dict(),
                "k": k, "bc": bc, "method": method}
    rows = [{"mode": i, "quotient": float(q)}
            for i, q in enumerate(modes.quotients)]
    _write(args, "isometry solve", resolved, results,
           csv_columns=["mode", "quotient"], csv_rows=rows,
           curves={"quotients": (list(range(k)), modes.quotients)})
    print("quotients:", " ".join(f"{q:.3e}" for q in modes.quotients))
    return 0


def _cmd_classify(args, cfg):
    if args.beta is None and args.alpha is None and "beta" not in cfg \
            and "alpha" not in cfg:
        raise BadDescriptor("classify needs --beta or --alpha")
    results = {}
    alpha = args.alpha if args.alpha is not None else cfg.get("alpha")
    beta = args.beta if args.beta is not None else cfg.get("beta")
    if alpha is not None:
        beta_from_alpha = alpha_to_beta(float(alpha))
        results["alpha"] = float(alpha)
        results["beta_from_alpha"] = beta_from_alpha
        if beta is None:
            beta = beta_from_alpha
    if beta is not None:
        results["beta"] = float(beta)
        results.update(order_for_scaling(float(beta)))
    if "N" in results:
        up = results["beta_N"]
        up_str = "inf" if up == float("inf") else f"{up:g}"
        print(f"N = {results['N']}, bracket [{results['beta_N1']:g}, {up_str})")
    if "beta_from_alpha" in results:
        print(f"alpha = {alpha:g} -> beta = {results['beta_from_alpha']:g}")
    if args.out:
        resolved = {"subcommand": "classify",
                    **{k: results[k] for k in ("alpha", "beta") if k in results}}
        _write(args, "classify", resolved, results)
    return 0


def _cmd_match_run(args, cfg):
    S = _surface(cfg)
    vspec = cfg.get("V", {"kind": "mode", "index": 0})
    if isinstance(vspec, dict) and vspec.get("kind") == "mode":
        idx = int(vspec.get("index", 0))
        modes = solve_infinitesimal_isometries(
            S, k=idx + 1, method=vspec.get("method", "svd"))
        V = modes.fields[idx]
        V = V.scaled(1.0 / V.sup_norm())
    else:
        V = _field(S, vspec)
    eps_values = cfg.get("eps_values", [0.1, 0.05, 0.025, 0.0125])
    tol = float(cfg.get("tol", 1e-10))
    result = matching_study(S, V, eps_values, tol=tol)
    results = result.to_dict()
    results["input_quotient"] = strain_quotient(S, V)
    resolved = {"subcommand": "match run", "surface": S.to_dict(),
                "V": vspec, "eps_values": list(map(float, eps_values)),
                "tol": tol}
    rows = [{"eps": e, "defect": d, "iterations": it, "sup_w": s, "c2_norm": c}
            for e, d, it, s, c in zip(result.eps_values, result.defects,
                                      result.iterations, result.sup_norms,
                                      result.c2_norms)]
    _write(args, "match run", resolved, results,
           csv_columns=["eps", "defect", "iterations", "sup_w", "c2_norm"],
           csv_rows=rows,
           curves={"sup_w_vs_eps": (result.eps_values, result.sup_norms)})
    print("defects:", " ".join(f"{d:.2e}" for d in result.defects),
          "| sup ratios:", " ".join(f"{r:.3f}" for r in result.sup_ratios))
    return 0


def _target_for_regime(S, M, regime, spec):
    if regime["kind"] == "kirchhoff":
        return {"beta": 2.0, "values": {
            "raw": kirchhoff_energy(S, M, regime["y"], "raw"),
            "scaled": kirchhoff_energy(S, M, regime["y"], "scaled"),
        }}
    beta = regime["beta"]
    if regime["kind"] == "vonkarman":
        w = regime.get("w")
        B = (tangential_strain(S, w, discrete=True) if w is not None
             else np.zeros(S.shape + (2, 2)))
        return {"beta": beta,
                "values": {"von_karman": von_karman_energy(S, M, regime["V"], B)}}
    return {"beta": beta,
            "values": {"linear_bending":
                       linear_bending_energy(S, M, regime["V"])}}


def _cmd_scaling_run(args, cfg):
    S = _surface(cfg)
    M = _material(cfg)
    regime = _regime(S, M, cfg["regime"])
    h_values = [float(h) for h in cfg.get("h_values",
                                          [2.0 ** (-k) for k in range(4, 9)])]
    t_points = int(cfg.get("t_points", 3))
    target = None
    if cfg.get("target", True):
        target = _target_for_regime(S, M, regime, cfg)
    seq = lambda h: build_recovery_sequence(S, M, regime, h)
    rep = scaling_study(S, M, seq, h_values, target=target, t_points=t_points)
    results = rep.to_dict()
    if rep.relative_errors and regime["kind"] == "kirchhoff":
        results["normalization_selected"] = min(
            rep.relative_errors, key=rep.relative_errors.get)
    resolved = {"subcommand": "scaling run", "surface": S.to_dict(),
                "material": M.to_dict(), "regime": cfg["regime"],
                "h_values": h_values, "t_points": t_points,
                "target": bool(cfg.get("target", True))}
    curves = {"energy_vs_h": (rep.h_values, rep.energies)}
    if rep.scaled_energies:
        curves["scaled_energy_vs_h"] = (rep.h_values, rep.scaled_energies)
    _write(args, "scaling run", resolved, results,
           csv_columns=["h", "E_h", "E_h_over_h_beta", "stretching", "bending"],
           csv_rows=rep.csv_rows(), curves=curves)
    if rep.degenerate:
        print("degenerate sweep: all energies at machine zero")
    else:
        print(f"beta_hat = {rep.beta_hat:.4f} (fit residual "
              f"{rep.fit_residual:.2e})" +
              (f", limit = {rep.extrapolated:.6g}" if rep.extrapolated else ""))
    return 0


def _cmd_equipartition_run(args, cfg):
    S = _surface(cfg)
    M = _material(cfg)
    regime = _regime(S, M, cfg["regime"]) if "regime" in cfg else None
    h_values = [float(h) for h in cfg.get("h_values", [0.05])]
    t_points = int(cfg.get("t_points", 3))
    rows = []
    for h in h_values:
        if regime is not None:
            ansatz = build_recovery_sequence(S, M, regime, h)
        else:
            ansatz = _ansatz(S, cfg.get("ansatz", {"kind": "identity"}))
        rep = equipartition_report(S, M, ansatz, h, t_points=t_points)
        rows.append({"h": h, "E_h": rep["energy"],
                     "E_h_over_h_beta": "",
                     "stretching": rep["stretching"],
                     "bending": rep["bending"],
                     "heuristic_gap": rep["heuristic_gap"]})
    results = {"rows": rows}
    resolved = {"subcommand": "equipartition run", "surface": S.to_dict(),
                "material": M.to_dict(), "h_values": h_values,
                "t_points": t_points,
                **({"regime": cfg["regime"]} if "regime" in cfg else
                   {"ansatz": cfg.get("ansatz", {"kind": "identity"})})}
    _write(args, "equipartition run", resolved, results,
           csv_columns=["h", "E_h", "E_h_over_h_beta", "stretching",
                        "bending", "heuristic_gap"],
           csv_rows=rows,
           curves={"stretching_vs_h": ([r["h"] for r in rows],
                                       [r["stretching"] for r in rows]),
                   "bending_vs_h": ([r["h"] for r in rows],
                                    [r["bending"] for r in rows])})
    for r in rows:
        print(f"h={r['h']:g}: stretching={r['stretching']:.3e} "
              f"bending={r['bending']:.3e} E={r['E_h']:.6g}")
    return 0


_HANDLERS = {
    ("surface", "show"): _cmd_surface_show,
    ("material", "check"): _cmd_material_check,
    ("energy", "eval"): _cmd_energy_eval,
    ("isometry", "solve"): _cmd_isometry_solve,
    ("match", "run"): _cmd_match_run,
    ("scaling", "run"): _cmd_scaling_run,
    ("equipartition", "run"): _cmd_equipartition_run,
}


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        cfg = _load_config(args)
        if args.group == "classify":
            return _cmd_classify(args, cfg)
        return _HANDLERS[(args.group, args.action)](args, cfg)
    except _SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    except _VALIDATION_ERRORS as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
