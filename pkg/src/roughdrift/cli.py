"""Command-line entry point: ``roughdrift <subcommand> ...``.

Exit status is 0 when every asserted gate passes, 1 when a gate fails and
2 on configuration or input errors (one-line diagnostic on stderr).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import besov, mc
from .errors import BoxExitError, ConfigurationError

EXIT_OK, EXIT_GATE, EXIT_CONFIG = 0, 1, 2


def _args_hash(args, *metas):
    """Hash naming the outputs of a single subcommand: its arguments plus input sidecars."""
    payload = {k: v for k, v in vars(args).items() if k not in ("func", "out")}
    payload["inputs"] = metas
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()


def cmd_run(args):
    from .config import ExperimentConfig
    from .runner import run

    cfg = ExperimentConfig.load(args.config)
    man = run(cfg, args.out, figures=not args.no_figures)
    for name, ok in man.summary.items():
        msg = man.errors.get(name, "")
        print(f"{name:15s} {'PASS' if ok else 'FAIL'} {msg}".rstrip())
    print(f"manifest: {os.path.join(args.out, 'manifest.json')}")
    return EXIT_OK if man.all_pass else EXIT_GATE


def cmd_sample_fbm(args):
    from .fbm import FbmConfig, sample_fbm_batch
    from .io import write_paths

    cfg = FbmConfig(args.hurst, args.steps, args.horizon, args.dim)
    idx = np.arange(args.paths)
    B, sampler = sample_fbm_batch(cfg, args.seed, idx)
    prefix = write_paths(args.out, B, cfg.times, "B", args.hurst, args.seed, idx, {"sampler": sampler})
    inc = np.diff(B, axis=1).ravel() / cfg.dt**args.hurst
    print(f"wrote {prefix}.bin ({args.paths} paths, sampler={sampler}); "
          f"standardized increments mean={inc.mean():.4f} var={inc.var():.4f}")
    return EXIT_OK


def cmd_mollify(args):
    from .drift import DriftSpec, mollify
    from .io import write_grid

    if args.drift != "dirac":
        raise ConfigurationError(f"unsupported drift {args.drift!r}; only 'dirac' is available here")
    lat = besov.SpatialLattice(args.dim, args.half_width, args.points)
    spec = DriftSpec.dirac(args.dim, weight=args.weight)
    f = mollify(spec, args.eps, lat, args.kernel)
    prefix = write_grid(args.out, f, {"drift": args.drift, "epsilon": args.eps, "mollifier": args.kernel,
                                      "weight": args.weight})
    print(f"wrote {prefix}.bin (lattice {args.points}^{args.dim} on [-{args.half_width:g}, {args.half_width:g}))")
    return EXIT_OK


def cmd_solve(args):
    from .io import read_grid, read_paths, write_paths
    from .solve import SolveConfig, euler_solve_batch

    B, times, meta = read_paths(args.noise)
    if meta.get("kind") != "B":
        raise ConfigurationError(f"{args.noise} holds kind {meta.get('kind')!r} paths, expected B")
    f, _ = read_grid(args.drift_file)
    x0 = np.zeros(B.shape[2]) if args.x0 is None else np.asarray(args.x0, float)
    sol = euler_solve_batch(SolveConfig(x0, f), B, times)
    extra = {"x0": x0.tolist(), "exit_index": sol.exit_index.tolist(), "noise": os.path.basename(str(args.noise))}
    prefix = write_paths(args.out, sol.K, times, "K", meta["hurst"], meta["master_seed"], meta["path_indices"], extra)
    n_exit = int((~sol.ok).sum())
    print(f"wrote {prefix}.bin ({sol.n_paths} paths, {n_exit} box exits)")
    return EXIT_OK if n_exit == 0 else EXIT_GATE


def cmd_sew_check(args):
    from .drift import DriftSpec, mollify
    from .fbm import FbmConfig, build_volterra, sample_fbm_batch
    from .io import write_json
    from .sewing import fit_sewing_conditions
    from .solve import SolveConfig, euler_solve_batch

    lat = besov.SpatialLattice(1, args.half_width, args.points)
    spec = DriftSpec.dirac(1)
    spec.check_gate(args.hurst)
    h = mollify(spec, args.eps, lat)
    cfg = FbmConfig(args.hurst, args.steps)
    B, _ = sample_fbm_batch(cfg, args.seed, range(args.paths))
    sol = euler_solve_batch(SolveConfig([0.0], h), B, cfg.times)
    rep = fit_sewing_conditions(h, sol, build_volterra(cfg), m=args.m, levels=range(args.k_min, args.k_max + 1),
                                hurst=args.hurst, beta=spec.declared_beta)
    out = rep.to_dict()
    out["config_hash"] = _args_hash(args)
    out["master_seed"] = args.seed
    write_json(args.out, out)
    print(rep.summary())
    print(f"bound violations: {rep.bound_violations}/{rep.bound_checks}")
    return EXIT_OK if rep.passes and rep.bound_violations == 0 else EXIT_GATE


def cmd_estimate(args):
    from .io import read_paths, write_csv, write_json

    vals, times, meta = read_paths(args.input)
    kind = meta.get("kind")
    if args.quantity != kind:
        raise ConfigurationError(f"--quantity {args.quantity} needs a {args.quantity} container, got kind {kind!r}")
    if not np.all(np.isfinite(vals)):
        keep = np.all(np.isfinite(vals), axis=(1, 2))
        vals = vals[keep]
    lags = mc.dyadic_lags(args.k_min, args.k_max, times[-1])
    steps = mc.lag_steps(len(times) - 1, lags, times[-1])
    q = mc.power_means(vals, steps, args.m)
    table = mc.table_from_power_means(q, args.m, lags, args.quantity, meta["master_seed"])
    fit = mc.fit_exponent(table)
    h = _args_hash(args, meta)
    write_csv(args.out, table.rows(), h, meta["master_seed"])
    write_json(os.path.splitext(args.out)[0] + ".fit.json",
               {"table": table.to_dict(), "fit": fit.to_dict(), "config_hash": h,
                "anchor": "increment moment scaling (informational, no gate)", "master_seed": meta["master_seed"],
                "hurst": meta.get("hurst")})
    print(f"slope={fit.slope:.4f} ci95=({fit.ci95[0]:.4f}, {fit.ci95[1]:.4f}) r2={fit.r_squared:.4f} "
          f"n_paths={table.n_paths}")
    return EXIT_OK


def _report_rows(rep):
    """(check, value, passes, anchor) rows read from a stored report."""
    anchor = rep.get("anchor", "")
    rows = []
    if "gates" in rep:
        for k, v in rep["gates"].items():
            sub = rep.get(k, {})
            rows.append((k, "", v, sub.get("anchor", anchor) if isinstance(sub, dict) else anchor))
    if "fit" in rep and "table" in rep:
        rows.append((f"slope m={rep['table']['m']:g}", rep["fit"]["slope"], None, anchor))
    for key in ("alpha1", "beta1", "lm_slope", "uniformity_ratio", "ks_statistic", "bound_violations"):
        if key in rep:
            rows.append((key, rep[key], None, anchor))
    for sub in rep.get("by_m", []):
        fit = sub["fit"]
        rows.append((f"slope m={sub.get('m', sub.get('table', {}).get('m'))}", fit["slope"], sub["passes"],
                     sub.get("anchor", anchor)))
    if "passes" in rep and "gates" not in rep and not rep.get("by_m"):
        rows.append(("passes", "", rep["passes"], anchor))
    return rows


def cmd_report(args):
    from .io import read_json

    rep = read_json(args.report)
    base = os.path.dirname(os.path.abspath(args.report))
    if "summary" in rep and "outputs" in rep:
        reports = []
        for name in rep["summary"]:
            files = rep["outputs"].get(name)
            if files:
                reports.append((name, read_json(os.path.join(base, files["json"]))))
            else:
                reports.append((name, {"passes": False, "anchor": rep.get("errors", {}).get(name, "")}))
    else:
        reports = [(os.path.splitext(os.path.basename(args.report))[0], rep)]
    print(f"{'suite':14s} {'check':20s} {'value':>12s}  {'result':6s}  anchor")
    ok = True
    for name, r in reports:
        for check, value, passed, anchor in _report_rows(r):
            val = f"{value:.4g}" if isinstance(value, (int, float)) and not isinstance(value, bool) else str(value)
            if passed is None:
                verdict = "info"
            else:
                ok &= bool(passed)
                verdict = "PASS" if passed else "FAIL"
            print(f"{name:14s} {check:20s} {val:>12s}  {verdict:6s}  {anchor}")
    return EXIT_OK if ok else EXIT_GATE


def cmd_aggregate(args):
    from .io import aggregate_csv

    aggregate_csv(args.inputs, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="roughdrift", description="Distributional-drift SDE laboratory.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", help="run the suites of a YAML experiment config")
    s.add_argument("config")
    s.add_argument("--out", default="results")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("sample-fbm", help="sample fBm paths into a path container")
    s.add_argument("--hurst", type=float, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--paths", type=int, default=1000)
    s.add_argument("--dim", type=int, default=1)
    s.add_argument("--horizon", type=float, default=1.0)
    s.add_argument("--out", default="fbm")
    s.set_defaults(func=cmd_sample_fbm)

    s = sub.add_parser("mollify", help="mollify a drift onto a lattice")
    s.add_argument("--drift", default="dirac")
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--dim", type=int, default=1)
    s.add_argument("--weight", type=float, default=1.0)
    s.add_argument("--kernel", default="gaussian", choices=["gaussian", "bump"])
    s.add_argument("--half-width", type=float, default=20.0)
    s.add_argument("--points", type=int, default=2**14)
    s.add_argument("--out", default="drift")
    s.set_defaults(func=cmd_mollify)

    s = sub.add_parser("solve", help="Euler-solve a path container against a mollified drift")
    s.add_argument("--noise", required=True)
    s.add_argument("--drift-file", required=True)
    s.add_argument("--x0", type=float, nargs="+")
    s.add_argument("--out", default="solution")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("sew-check", help="fit the sewing conditions for a mollified Dirac drift")
    s.add_argument("--hurst", type=float, default=0.3)
    s.add_argument("--eps", type=float, default=3e-3)
    s.add_argument("--steps", type=int, default=4096)
    s.add_argument("--paths", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--m", type=float, default=2.0)
    s.add_argument("--k-min", type=int, default=1)
    s.add_argument("--k-max", type=int, default=7)
    s.add_argument("--half-width", type=float, default=20.0)
    s.add_argument("--points", type=int, default=2**14)
    s.add_argument("--out", default="sewing.json")
    s.set_defaults(func=cmd_sew_check)

    s = sub.add_parser("estimate", help="increment moments and exponent fit from a path container")
    s.add_argument("--input", required=True)
    s.add_argument("--quantity", default="B", choices=["B", "K"])
    s.add_argument("--m", type=float, default=2.0)
    s.add_argument("--k-min", type=int, default=1)
    s.add_argument("--k-max", type=int, default=8)
    s.add_argument("--out", default="moments.csv")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("report", help="render a stored JSON report or run manifest as a table")
    s.add_argument("report")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("aggregate", help="concatenate CSV tables that share a config hash and seed")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_aggregate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, BoxExitError, ValueError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
