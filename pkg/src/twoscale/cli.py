"""Batch command-line front end.

Usage: ``python -m twoscale SUBCOMMAND --config cfg.json --out DIR``.
Exit status is 0 on success, 1 for invalid input and 2 when a solve or a
diagnostic check fails.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys

import jsonschema
import numpy as np

from .errors import ConfigurationError, DiagnosticFailure, SolverError

log = logging.getLogger("twoscale")

SUBCOMMANDS = ("correctors", "effective", "solve", "convergence", "resolvent",
               "diagnostics", "unfold-check")

_NUM = {"type": "number"}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "coefficients": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "preset": {"type": "string"},
                "params": {"type": "object"},
            },
        },
        "grids": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 2, "maximum": 4096},
                "m": {"type": "integer", "minimum": 2, "maximum": 4096},
                "quad_order": {"enum": [2, 3]},
            },
        },
        "solver": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0, "maximum": 1e-2},
                "corrector_tol": {"type": "number", "exclusiveMinimum": 0, "maximum": 1e-2},
                "lam": {"anyOf": [_NUM, {"const": "auto"}]},
                "lam_margin": {"type": "number", "exclusiveMinimum": 0},
                "method": {"enum": ["auto", "direct", "iterative"]},
                "beta0_mode": {"enum": ["analytic", "empirical", None]},
            },
        },
        "study": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "deltas": {"type": "array", "minItems": 1,
                           "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
                "rhs": {"type": "string"},
                "g": {"type": "string"},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "samples": {"type": "integer", "minimum": 1, "maximum": 100000},
                "diag_n": {"type": "integer", "minimum": 2, "maximum": 64},
            },
        },
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "csv": {"type": "boolean"},
                "plot": {"type": "boolean"},
            },
        },
    },
}

DEFAULTS = {
    "coefficients": {"preset": "layered", "params": {}},
    "grids": {"n": 64, "m": 64, "quad_order": 2},
    "solver": {"tol": 1e-10, "corrector_tol": 1e-9, "lam": "auto", "lam_margin": 1.0,
               "method": "auto", "beta0_mode": None},
    "study": {"deltas": [0.25, 0.125], "rhs": "one", "g": "cosines", "seed": 0,
              "samples": 200, "diag_n": 16},
    "output": {"csv": True, "plot": True},
}


def _defaults_help():
    lines = ["config sections and defaults:"]
    for sec, vals in DEFAULTS.items():
        lines.append(f"  {sec}: " + ", ".join(f"{k}={json.dumps(v)}" for k, v in vals.items()))
    lines.append("exit status: 0 success, 1 invalid input, 2 solver or check failure")
    lines.append("HOM_LOG sets the log level (DEBUG, INFO, WARNING, ...)")
    return "\n".join(lines)


def load_config(source=None):
    """Validate a config (path, dict or ``None``) and fill in defaults."""
    if source is None:
        data = {}
    elif isinstance(source, dict):
        data = copy.deepcopy(source)
    else:
        try:
            with open(source) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {source}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {source} is not valid JSON: {exc}") from None
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"config error at {where}: {exc.message}") from None
    out = copy.deepcopy(DEFAULTS)
    for sec, vals in data.items():
        out[sec].update(vals)
    return out


def study_config(cfg, threads=1):
    from .study import StudyConfig

    return StudyConfig(
        preset=cfg["coefficients"]["preset"], params=dict(cfg["coefficients"]["params"]),
        deltas=tuple(cfg["study"]["deltas"]), n=cfg["grids"]["n"], m=cfg["grids"]["m"],
        lam=cfg["solver"]["lam"], lam_margin=cfg["solver"]["lam_margin"],
        rhs=cfg["study"]["rhs"], g=cfg["study"]["g"], seed=cfg["study"]["seed"],
        tol=cfg["solver"]["tol"], corrector_tol=cfg["solver"]["corrector_tol"],
        quad_order=cfg["grids"]["quad_order"], beta0_mode=cfg["solver"]["beta0_mode"],
        diag_n=cfg["study"]["diag_n"], threads=threads,
    ).validate()


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file (defaults below)")
    common.add_argument("--out", metavar="DIR",
                        help="output directory; without it the JSON result goes to stdout")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, metavar="N",
                        help="worker cap for independent solves (default: available CPUs)")
    common.add_argument("--seed", type=int, metavar="U64", help="override study.seed")
    common.add_argument("--quiet", action="store_true", help="suppress progress and stdout")
    p = _Parser(prog="twoscale", description="Periodic homogenization studies.",
                epilog=_defaults_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    sub.required = True
    helps = {
        "correctors": "solve the periodic cell problems",
        "effective": "effective coefficients and their ellipticity check",
        "solve": "solve the oscillating problem at the first delta and the limit problem",
        "convergence": "per-delta errors against the homogenized solution",
        "resolvent": "resolvent distances with perturbed data f + delta g",
        "diagnostics": "bounds, form index, equivalence and sector constants",
        "unfold-check": "exact unfolding identities on seeded fields",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name], epilog=_defaults_help(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    return p


# ---------------------------------------------------------------------------
# subcommands; each returns (result dict, {filename: rows}) for extra CSV tables

def _grids(cfg):
    from .grid import DIRICHLET, PERIODIC, build_grid

    g = cfg["grids"]
    return build_grid(DIRICHLET, g["n"], g["quad_order"]), build_grid(PERIODIC, g["m"], g["quad_order"])


def _coeff(cfg):
    from .coeffs import make_preset

    return make_preset(cfg["coefficients"]["preset"], **cfg["coefficients"]["params"])


def cmd_correctors(cfg, args, out):
    from .cell import check_gradient_bound, solve_correctors

    coeff = _coeff(cfg)
    macro, yg = _grids(cfg)
    xs = None if coeff.is_periodic_only else macro.quad_points
    cs = solve_correctors(coeff, yg, xs, tol=cfg["solver"]["corrector_tol"])
    norms = cs.gradient_norms()
    bound = check_gradient_bound(cs)
    if out and cfg["output"]["csv"]:
        cs.to_csv(os.path.join(out, "correctors.csv"))
    return {"preset": coeff.name, "m": yg.n, "samples": cs.n_samples,
            "x_independent": cs.x_independent,
            "gradient_norms_max": norms.max(axis=0).tolist(),
            "omega0_gradient_check": {"max_norm": max(n for n, _ in bound),
                                      "min_bound": min(b for _, b in bound)},
            "M": float(np.max(norms[:, 1:].sum(axis=1)))}, {}


def _effective(cfg):
    from .cell import solve_correctors
    from .effective import assemble_effective

    coeff = _coeff(cfg)
    macro, yg = _grids(cfg)
    xs = None if coeff.is_periodic_only else macro.quad_points
    cs = solve_correctors(coeff, yg, xs, tol=cfg["solver"]["corrector_tol"])
    return coeff, macro, cs, assemble_effective(coeff, cs)


def cmd_effective(cfg, args, out):
    from .effective import check_effective_ellipticity

    coeff, macro, cs, eff = _effective(cfg)
    ell = check_effective_ellipticity(eff, coeff.alpha, coeff.beta)
    res = eff.to_dict()
    res["ellipticity"] = {"alpha_eff": ell.alpha_eff, "beta_eff": ell.beta_eff, "M": ell.M,
                          "lower": ell.lower, "upper": ell.upper, "passed": ell.passed}
    tables = {"effective.csv": list(eff.rows())} if cfg["output"]["csv"] else {}
    return res, tables


def cmd_solve(cfg, args, out):
    from .effective import solve_homogenized
    from .forms import assemble_delta_form
    from .grid import ScalarField, h1_norm, l2_norm
    from .solver import ResolventOperator, check_apriori, coercivity_constant, load_vector
    from .study import prepare

    sc = study_config(cfg, args.threads)
    prep, _ = prepare(sc)
    delta = sc.deltas[0]
    form = assemble_delta_form(prep.macro, prep.coeff, delta, prep.lam)
    G = ResolventOperator(form, sc.tol, cfg["solver"]["method"])
    u = ScalarField(prep.macro, G.solve_vector(load_vector(prep.macro, prep.f)))
    u0, _ = solve_homogenized(prep.macro, prep.eff, prep.lam, prep.f, prep.beta_prime, sc.tol)
    res = {"delta": delta, "lambda": prep.lam, "beta0": prep.beta0, "beta_prime": prep.beta_prime,
           "solver": G.method, "l2_norm": l2_norm(u), "h1_norm": h1_norm(u),
           "energy": form.energy(u), "l2_distance_to_limit": l2_norm(u - u0)}
    if prep.macro.n <= 64:
        k1 = coercivity_constant(form)
        ap = check_apriori(u, prep.macro.interpolate(prep.f), k1)
        res["apriori"] = {"kappa1": k1, "lhs": ap.lhs, "bound": ap.bound, "passed": ap.passed}
    tables = {}
    if cfg["output"]["csv"]:
        xy = prep.macro.dof_coords
        tables["solution.csv"] = [{"x1": float(a), "x2": float(b), "u_delta": float(c), "u0": float(d)}
                                  for (a, b), c, d in zip(xy, u.values, u0.values)]
    return res, tables


def _study_outputs(report, cfg, stem, ykeys):
    tables = {f"{stem}.csv": report.rows} if cfg["output"]["csv"] else {}
    res = report.to_dict()
    res["config"] = cfg
    return res, tables, (stem, ykeys)


def cmd_convergence(cfg, args, out):
    from .study import run_convergence

    report = run_convergence(study_config(cfg, args.threads))
    return _study_outputs(report, cfg, "convergence",
                          ["l2_error", "h1_error", "energy_gap", "two_scale_error"])


def cmd_resolvent(cfg, args, out):
    from .study import run_resolvent_convergence

    report = run_resolvent_convergence(study_config(cfg, args.threads))
    return _study_outputs(report, cfg, "resolvent", ["resolvent_distance", "energy_gap"])


def cmd_diagnostics(cfg, args, out):
    from .coeffs import verify_bounds
    from .forms import assemble_delta_form, check_unit_contraction, diagnose
    from .grid import DIRICHLET, ScalarField, build_grid, h1_norm
    from .sampling import random_fields
    from .solver import ResolventOperator, markov_report

    coeff = _coeff(cfg)
    seed = cfg["study"]["seed"]
    samples = cfg["study"]["samples"]
    delta = cfg["study"]["deltas"][0]
    bounds = verify_bounds(coeff, seed=seed)
    grid = build_grid(DIRICHLET, min(cfg["grids"]["n"], cfg["study"]["diag_n"]))
    diag = diagnose(grid, coeff, delta, cfg["solver"]["beta0_mode"], samples, seed)
    res = {"preset": coeff.name, "delta": delta, "grid_n": grid.n,
           "bounds": {"alpha_hat": bounds.alpha_hat, "beta_hat": bounds.beta_hat,
                      "min_k": bounds.min_k, "worst_divC_test": bounds.worst_divC},
           **diag.as_dict()}
    fields = [ScalarField(grid, 3.0 * f / np.abs(f).max())
              for f in random_fields(grid, 20, np.random.default_rng(seed))]
    uc = [check_unit_contraction(grid, coeff, delta, f) for f in fields]
    if uc[0].applicable:
        worst = min(r.value / h1_norm(f) ** 2 for r, f in zip(uc, fields))
        res["unit_contraction"] = {"status": "ok" if worst >= -1e-8 else "violated",
                                   "worst_relative": worst}
    else:
        res["unit_contraction"] = {"status": "not applicable"}
    form = assemble_delta_form(grid, coeff, delta, diag.beta)
    mk = markov_report(ResolventOperator(form), coeff, seed=seed)
    res["markov"] = {"min": mk.min_value, "max": mk.max_value, "m_matrix": mk.m_matrix,
                     "asserted": mk.asserted}
    return res, {}


def cmd_unfold_check(cfg, args, out):
    from .grid import DIRICHLET, PERIODIC, ScalarField, build_grid, l2_norm
    from .unfold import build_partition, covered_integral, is_aligned, unfold

    g = cfg["grids"]
    macro = build_grid(DIRICHLET, g["n"])
    rng = np.random.default_rng(cfg["study"]["seed"])
    rows = []
    for delta in cfg["study"]["deltas"]:
        part = build_partition(delta)
        # the coarsest Y-grid whose images tile the macro elements keeps this exact and cheap
        per_cell = delta * macro.n
        m = int(round(per_cell)) if abs(per_cell - round(per_cell)) < 1e-9 else min(g["m"], 16)
        yg = build_grid(PERIODIC, max(m, 1))
        worst_id = worst_mul = worst_con = 0.0
        for _ in range(20):
            u = ScalarField(macro, rng.normal(size=macro.n_dofs))
            w = ScalarField(macro, rng.normal(size=macro.n_dofs))
            Tu, Tw = unfold(u, part, yg), unfold(w, part, yg)
            worst_id = max(worst_id, abs(Tu.integral() - covered_integral(u, part)))
            prod = unfold(lambda p: u(p) * w(p), part, yg).values
            worst_mul = max(worst_mul, float(np.abs(prod - Tu.values * Tw.values).max()))
            worst_con = max(worst_con, Tu.l2_norm() - l2_norm(u))
        rows.append({"delta": delta, "cells": part.n_cells, "covered_area": part.covered_area,
                     "layer_area": part.layer_area, "y_grid_m": yg.n,
                     "aligned": is_aligned(part, macro, yg), "identity_residual": worst_id,
                     "multiplicativity_error": worst_mul, "contraction_excess": worst_con})
    return {"rows": rows}, ({"unfold.csv": rows} if cfg["output"]["csv"] else {})


COMMANDS = {
    "correctors": cmd_correctors, "effective": cmd_effective, "solve": cmd_solve,
    "convergence": cmd_convergence, "resolvent": cmd_resolvent,
    "diagnostics": cmd_diagnostics, "unfold-check": cmd_unfold_check,
}


def _setup_logging(quiet):
    level = os.environ.get("HOM_LOG", "WARNING").upper()
    if quiet:
        level = "ERROR"
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None):
    from . import report as rep

    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.quiet)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["study"]["seed"] = args.seed
        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        if args.out:
            os.makedirs(args.out, exist_ok=True)
        log.info("running %s", args.command)
        result = COMMANDS[args.command](cfg, args, args.out)
        plot = None
        if len(result) == 3:
            result, tables, plot = result
        else:
            result, tables = result
        result.setdefault("config", cfg)
        stem = args.command.replace("-", "_") if args.command != "unfold-check" else "unfold"
        if args.out:
            rep.write_json(os.path.join(args.out, f"{stem}.json"), result)
            for name, rows in tables.items():
                rep.write_csv(os.path.join(args.out, name), rows)
            if plot and cfg["output"]["plot"]:
                name, keys = plot
                rep.write_svg(os.path.join(args.out, f"{name}.svg"), result["rows"], "delta", keys,
                              title=f"{name}: {cfg['coefficients']['preset']}")
        elif not args.quiet:
            print(rep.dumps(result))
    except (ConfigurationError, jsonschema.ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SolverError, DiagnosticFailure) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
