"""Command line front end: one subcommand per pipeline stage.

Usage::

    cdburgers <subcommand> [--config FILE] [--out DIR] [flags]

Subcommands and their JSON config schemas (all keys optional unless noted):

algebra-check
    {"levels": [2, 3, 4], "trials": 200, "seed": 0}
translate
    {"source": "<equation text>"} or {"source_file": "path"}   (one required)
kernel
    {"a": [a1, a2, a3],                 (required)
     "p": [p1, p2],                     (required)
     "w0": [w, ...],                    (required)
     "grid": {"n": 2, "lo": 0.0, "hi": 1.0, "count": 9},       (required)
     "kappa": [...],        default: smallest admissible root
     "r_inf": null, "tol": 1e-10, "max_iter": 40, "level": 2,
     "probes": 16, "force": false}
ode
    flags --m, --lambda (comma separated), --c, --horizon, --tau; or the
    same keys in a config file ("lambda" as a list)
measure-check
    {"reps": [[...], ...], "p": [...],  (required)
     "m": 1, "gamma": 0.0, "varsigma": 0.0,   (or explicit "xi": [...])
     "diameter": 1.0, "seed": 0, "samples": 100000}
assemble
    {"problem": {"alpha": .., "beta": .., "gamma": .., "varsigma": ..,
                 "c": [..], "n": 2, "lo": .., "hi": .., "horizon": ..,
                 "level": 2},                                  (required)
     "atoms": [[lam, ...], ...] or "matched": [[lam_prime], ...],
     "p": [...], "w0": [...],                                  (required)
     "grid": {"count": .., "t_count": ..},                     (required)
     "seed": 0, "tol": 1e-10, "probes": 16, "samples": 0}
verify
    {"problem": {...},                                         (required)
     "lam_prime": [...], "w0": [...],                          (required)
     "levels": [[count, t_count], ...],                        (required)
     "collar": 2.0, "t_collar": null,
     "seed": 0, "tol": 1e-10, "probes": 16, "samples": 0}

Artifacts are written into --out (default "."): JSON manifests through the
canonical serializer (sorted keys, fixed separators), CSV tables, and
binary field dumps in the documented calculus byte layout, so a fixed
config and seed produce byte-identical outputs.

Exit codes: 0 success, 1 validation error (bad flags, bad config, missing
file), 2 numerical failure (divergence, blow-up, or a failed check).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .algebra import CdElement, cd_mul, pi_project
from .calculus import Grid, dump_field
from .kernel import (
    KernelConfig,
    PicardDivergence,
    _jsonable,
    admissible_kappa,
    report_json,
    run_report,
    solve_K,
)
from .pdelang import parse_pde
from .randmeasure import (
    AtomicRandomMeasure,
    Partition,
    expectation,
    sample_H,
    structural_function,
    xi_from_rule,
)
from .temporal import CauchySpec, solve_cauchy, trajectory_csv
from .translate import translate_system
from .workbench import (
    SobolevBurgersSpec,
    SpectralPoint,
    assemble_u,
    measure_for_atoms,
    moment_identity,
    refinement_study,
    residual_suite,
    study_csv,
)

__all__ = ["cli_run", "main"]


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit 2; this artifact reserves 2 for
    numerical failures, so usage errors exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _load_config(args) -> dict:
    if args.config is None:
        return {}
    text = Path(args.config).read_text()
    data = json.loads(text)
    if not isinstance(data, dict):
        raise ValueError("config must be a JSON object")
    return data


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_text(out: Path, name: str, text: str) -> None:
    (out / name).write_text(text)
    print(f"wrote {out / name}")


def _emit(out: Path, name: str, report: dict) -> None:
    _write_text(out, name, report_json(_jsonable(report)))


def _finish(ok: bool, what: str) -> int:
    print(f"{what}: {'pass' if ok else 'FAIL'}")
    return 0 if ok else 2


# ---------------------------------------------------------------------------
# algebra-check
# ---------------------------------------------------------------------------


def _run_algebra_check(args) -> int:
    cfg = _load_config(args)
    levels = cfg.get("levels", [2, 3, 4])
    trials = int(cfg.get("trials", 200))
    seed = int(cfg.get("seed", 0))
    rng = np.random.default_rng(seed)

    anticommutation_exact = True
    squares_exact = True
    for r in levels:
        dim = 1 << int(r)
        for j in range(1, dim):
            ij = CdElement.basis(r, j)
            sq = cd_mul(ij, ij)
            if not np.array_equal(sq.coeffs, -CdElement.basis(r, 0).coeffs):
                squares_exact = False
            for k in range(j + 1, dim):
                ik = CdElement.basis(r, k)
                anti = cd_mul(ij, ik).coeffs + cd_mul(ik, ij).coeffs
                if np.any(anti != 0.0):
                    anticommutation_exact = False

    alternativity_max = 0.0
    for r in (2, 3):
        for _ in range(trials):
            x = CdElement(r, rng.standard_normal(1 << r))
            y = CdElement(r, rng.standard_normal(1 << r))
            left = cd_mul(cd_mul(x, x), y).coeffs - cd_mul(
                x, cd_mul(x, y)).coeffs
            right = cd_mul(y, cd_mul(x, x)).coeffs - cd_mul(
                cd_mul(y, x), x).coeffs
            alternativity_max = max(
                alternativity_max,
                float(np.max(np.abs(left))), float(np.max(np.abs(right))))

    power_max = 0.0
    for r in (2, 3, 4, 5):
        for _ in range(trials):
            x = CdElement(r, rng.standard_normal(1 << r))
            x2 = cd_mul(x, x)
            x3a = cd_mul(x2, x)
            gap4 = cd_mul(x3a, x).coeffs - cd_mul(x2, x2).coeffs
            gap3 = x3a.coeffs - cd_mul(x, x2).coeffs
            power_max = max(power_max, float(np.max(np.abs(gap3))),
                            float(np.max(np.abs(gap4))))

    projection_max = 0.0
    for r in levels:
        dim = 1 << int(r)
        for _ in range(trials):
            z = CdElement(r, rng.standard_normal(dim))
            for j in range(dim):
                projection_max = max(
                    projection_max,
                    float(abs(pi_project(j, z) - z.coeffs[j])))

    ok = bool(anticommutation_exact and squares_exact
              and alternativity_max <= 1e-10 and power_max <= 1e-10
              and projection_max <= 1e-12)
    _emit(_outdir(args), "algebra_report.json", {
        "levels": [int(r) for r in levels],
        "trials": trials,
        "seed": seed,
        "anticommutation_exact": anticommutation_exact,
        "squares_exact": squares_exact,
        "alternativity_max": alternativity_max,
        "power_associativity_max": power_max,
        "projection_max": projection_max,
        "pass": ok,
    })
    return _finish(ok, "algebra-check")


# ---------------------------------------------------------------------------
# translate
# ---------------------------------------------------------------------------


def _run_translate(args) -> int:
    cfg = _load_config(args)
    if "source" in cfg:
        source = cfg["source"]
    elif "source_file" in cfg:
        source = Path(cfg["source_file"]).read_text()
    else:
        raise ValueError("translate config needs 'source' or 'source_file'")
    program = parse_pde(source)
    tp = translate_system(program)
    _emit(_outdir(args), "translate_report.json", {
        "source": source,
        "dim": program.dim,
        "unknown_components": program.unknown[1],
        "level": tp.level,
        "pretty": tp.pretty(),
        "tree": tp.to_tree(),
    })
    print(tp.pretty())
    return 0


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------


def _run_kernel(args) -> int:
    cfg = _load_config(args)
    for key in ("a", "p", "w0", "grid"):
        if key not in cfg:
            raise ValueError(f"kernel config needs '{key}'")
    g = cfg["grid"]
    grid = Grid.box(int(g.get("n", 2)), float(g["lo"]), float(g["hi"]),
                    int(g["count"]))
    a = tuple(cfg["a"])
    kappa = tuple(cfg["kappa"]) if "kappa" in cfg else admissible_kappa(
        a, grid.n)
    config = KernelConfig(
        a=a, p=tuple(cfg["p"]), kappa=kappa, w0=tuple(cfg["w0"]),
        r_inf=cfg.get("r_inf"), max_iter=int(cfg.get("max_iter", 40)),
        tol=float(cfg.get("tol", 1e-10)), level=int(cfg.get("level", 2)))
    kf = solve_K(config, grid, force=bool(cfg.get("force", False)),
                 probes=int(cfg.get("probes", 16)))
    out = _outdir(args)
    _emit(out, "kernel_report.json", run_report(kf, grid))
    rows = ["iter,diff,diff_l2,ratio,ratio_l2"]
    for t in kf.trace:
        rows.append(",".join(
            "" if t[k] is None else repr(t[k])
            for k in ("iter", "diff", "diff_l2", "ratio", "ratio_l2")))
    _write_text(out, "kernel_trace.csv", "\n".join(rows) + "\n")
    dump_field(kf.F, str(out / "F.cdgf"))
    print(f"wrote {out / 'F.cdgf'}")
    if kf.K is not None:
        dump_field(kf.K, str(out / "K.cdgf"))
        print(f"wrote {out / 'K.cdgf'}")
    return 0


# ---------------------------------------------------------------------------
# ode
# ---------------------------------------------------------------------------


def _run_ode(args) -> int:
    cfg = _load_config(args)
    m = int(args.m if args.m is not None else cfg.get("m", 1))
    if args.lam is not None:
        lam = tuple(float(v) for v in args.lam.split(","))
    elif "lambda" in cfg:
        lam = tuple(float(v) for v in cfg["lambda"])
    else:
        raise ValueError("ode needs --lambda or a config with 'lambda'")
    if args.c is not None:
        c = tuple(float(v) for v in args.c.split(","))
    else:
        c = tuple(float(v) for v in cfg.get("c", [0.0] * m))
    horizon = float(args.horizon if args.horizon is not None
                    else cfg.get("horizon", 0.5))
    tau = args.tau if args.tau is not None else cfg.get("tau")
    spec = CauchySpec(m=m, c=c, lam=lam, horizon=horizon,
                      tau=None if tau is None else float(tau))
    traj = solve_cauchy(spec)
    out = _outdir(args)
    _write_text(out, "trajectory.csv", trajectory_csv(traj))
    _emit(out, "ode_report.json", {
        "m": m, "c": list(c), "lambda": list(lam),
        "horizon": horizon, "tau": spec.step,
        "samples": len(traj.times),
        "blew_up": traj.blew_up,
        "blowup_time": traj.blowup_time,
        "max_residual": float(np.max(traj.residuals)),
    })
    if traj.blew_up:
        print(f"numerical failure: trajectory blew up at "
              f"t = {traj.blowup_time:.6g}", file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------
# measure-check
# ---------------------------------------------------------------------------


def _run_measure_check(args) -> int:
    cfg = _load_config(args)
    for key in ("reps", "p"):
        if key not in cfg:
            raise ValueError(f"measure-check config needs '{key}'")
    reps = tuple(tuple(float(v) for v in row) for row in cfg["reps"])
    partition = Partition(reps=reps,
                          diameter=float(cfg.get("diameter", 1.0)))
    if "xi" in cfg:
        xi = tuple(complex(v) for v in cfg["xi"])
    else:
        m = int(cfg.get("m", len(reps[0]) - 3))
        xi = tuple(
            xi_from_rule(rep, m, gamma=complex(cfg.get("gamma", 0.0)),
                         varsigma=complex(cfg.get("varsigma", 0.0)))
            for rep in reps)
    measure = AtomicRandomMeasure(partition=partition,
                                  p=tuple(float(v) for v in cfg["p"]),
                                  xi=xi, seed=int(cfg.get("seed", 0)))
    samples = int(cfg.get("samples", 100_000))
    real = sample_H(measure, samples)
    coeff = real.coefficients()
    size = measure.size
    p = np.asarray(measure.p)
    xi_arr = np.asarray(measure.xi, dtype=np.complex128)

    # per-sample orthogonality of distinct cells is structural: at most one
    # coefficient is nonzero per draw
    cross_max = 0.0
    for i in range(size):
        for j in range(i + 1, size):
            cross_max = max(cross_max, float(np.max(np.abs(
                coeff[:, i] * coeff[:, j]))))

    # first and second moments against the closed forms xi p and xi^2 p
    mean_gap = 0.0
    delta_gap = 0.0
    mean_pass = True
    delta_pass = True
    for j in range(size):
        m1, se1 = expectation(coeff[:, j])
        m2, se2 = expectation(coeff[:, j] * coeff[:, j])
        want1 = xi_arr[j] * p[j]
        want2 = xi_arr[j] ** 2 * p[j]
        mean_gap = max(mean_gap, float(abs(m1 - want1)))
        delta_gap = max(delta_gap, float(abs(m2 - want2)))
        mean_pass &= bool(
            abs(m1 - want1) <= 3.0 * float(abs(se1)) + 1e-12)
        delta_pass &= bool(
            abs(m2 - want2) <= 3.0 * float(abs(se2)) + 1e-12)

    # structural function: whole-space diagonal atom sum vs |xi|^2 p
    whole = list(range(size))
    struct_gap = float(abs(structural_function(measure, whole, whole)
                           - float(np.sum(np.abs(xi_arr) ** 2 * p))))
    ok = bool(cross_max == 0.0 and mean_pass and delta_pass
              and struct_gap <= 1e-12)
    _emit(_outdir(args), "measure_report.json", {
        "cells": size,
        "samples": samples,
        "seed": measure.seed,
        "cross_moment_max": cross_max,
        "mean_gap": mean_gap,
        "mean_within_3se": bool(mean_pass),
        "second_moment_gap": delta_gap,
        "second_moment_within_3se": bool(delta_pass),
        "structural_gap": struct_gap,
        "pass": ok,
    })
    return _finish(ok, "measure-check")


# ---------------------------------------------------------------------------
# assemble / verify
# ---------------------------------------------------------------------------


def _problem(cfg: dict) -> SobolevBurgersSpec:
    if "problem" not in cfg:
        raise ValueError("config needs a 'problem' section")
    pr = cfg["problem"]
    return SobolevBurgersSpec(
        alpha=pr["alpha"], beta=pr["beta"], gamma=pr["gamma"],
        varsigma=pr["varsigma"], c=tuple(pr["c"]), n=int(pr.get("n", 2)),
        lo=float(pr.get("lo", 0.0)), hi=float(pr.get("hi", 1.0)),
        horizon=float(pr.get("horizon", 1.0)),
        level=int(pr.get("level", 2)))


def _run_assemble(args) -> int:
    cfg = _load_config(args)
    spec = _problem(cfg)
    if "atoms" in cfg:
        atoms = [SpectralPoint(tuple(row)) for row in cfg["atoms"]]
    elif "matched" in cfg:
        atoms = [SpectralPoint.matched(spec, tuple(row))
                 for row in cfg["matched"]]
    else:
        raise ValueError("config needs 'atoms' or 'matched'")
    for key in ("p", "w0", "grid"):
        if key not in cfg:
            raise ValueError(f"assemble config needs '{key}'")
    grid = spec.grid(int(cfg["grid"]["count"]), int(cfg["grid"]["t_count"]))
    measure = measure_for_atoms(atoms, spec, tuple(cfg["p"]),
                                seed=int(cfg.get("seed", 0)))
    sol = assemble_u(atoms, measure, grid, spec, tuple(cfg["w0"]),
                     tol=float(cfg.get("tol", 1e-10)),
                     probes=int(cfg.get("probes", 16)))
    out = _outdir(args)
    report = {
        "atoms": [list(a.lam) for a in atoms],
        "p": list(measure.p),
        "xi": list(measure.xi),
        "grid": {"count": grid.counts[0], "t_count": grid.t_count},
        "kernels": [run_report(kf, grid) for kf in sol.kernels],
        "moment_identity": moment_identity(
            sol, samples=int(cfg.get("samples", 0))),
    }
    _emit(out, "assemble_report.json", report)
    for j, kf in enumerate(sol.kernels):
        dump_field(kf.K, str(out / f"atom{j}_K.cdgf"))
        print(f"wrote {out / f'atom{j}_K.cdgf'}")
    return 0


def _run_verify(args) -> int:
    cfg = _load_config(args)
    spec = _problem(cfg)
    for key in ("lam_prime", "w0", "levels", "collar"):
        if key not in cfg:
            raise ValueError(f"verify config needs '{key}'")
    levels = [tuple(int(v) for v in row) for row in cfg["levels"]]
    if args.refine is not None:
        if not 1 <= args.refine <= len(levels):
            raise ValueError(
                f"--refine must be between 1 and {len(levels)}")
        levels = levels[: args.refine]
    rows = refinement_study(
        spec, tuple(cfg["lam_prime"]), levels, tuple(cfg["w0"]),
        collar=float(cfg["collar"]),
        t_collar=(None if cfg.get("t_collar") is None
                  else float(cfg["t_collar"])),
        seed=int(cfg.get("seed", 0)), tol=float(cfg.get("tol", 1e-10)),
        samples=int(cfg.get("samples", 0)),
        probes=int(cfg.get("probes", 16)))
    out = _outdir(args)
    csv_text = study_csv(rows)
    _write_text(out, "refinement.csv", csv_text)
    ratios = [row[key] for row in rows for key in row
              if key.endswith("_ratio")]
    monotone = all(r < 1.0 for r in ratios)
    _emit(out, "verify_report.json", {
        "levels": [list(l) for l in levels],
        "collar": float(cfg["collar"]),
        "t_collar": cfg.get("t_collar"),
        "rows": rows,
        "monotone": monotone,
    })
    print(csv_text, end="")
    if len(levels) < 2:
        return 0
    return _finish(monotone, "verify (residuals decrease)")


# ---------------------------------------------------------------------------
# wiring
# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="cdburgers",
                     description="Sobolev-Burgers solution workbench")
    sub = parser.add_subparsers(dest="subcommand", required=True,
                                parser_class=_Parser)

    def stage(name, handler, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--out", default=".", help="artifact directory")
        p.set_defaults(handler=handler)
        return p

    stage("algebra-check", _run_algebra_check,
          "doubling-algebra property sweep")
    stage("translate", _run_translate,
          "lower a PDE over the doubling algebra")
    stage("kernel", _run_kernel, "solve the auxiliary kernel equation")
    ode = stage("ode", _run_ode, "integrate the temporal Cauchy problem")
    ode.add_argument("--m", type=int, default=None,
                     help="polynomial degree")
    ode.add_argument("--lambda", dest="lam", default=None,
                     help="comma separated parameter vector")
    ode.add_argument("--c", default=None,
                     help="comma separated lower coefficients")
    ode.add_argument("--horizon", type=float, default=None)
    ode.add_argument("--tau", type=float, default=None)
    stage("measure-check", _run_measure_check,
          "atomic random measure identity checks")
    stage("assemble", _run_assemble,
          "assemble a stochastic solution field")
    verify = stage("verify", _run_verify,
                   "residual refinement study of an assembled solution")
    verify.add_argument("--refine", type=int, default=None,
                        help="number of refinement levels to run")
    return parser


def cli_run(argv=None) -> int:
    """Entry point returning the exit code (0 ok, 1 validation error,
    2 numerical failure)."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return int(args.handler(args))
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (PicardDivergence, RuntimeError, ZeroDivisionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_run())


if __name__ == "__main__":
    main()
