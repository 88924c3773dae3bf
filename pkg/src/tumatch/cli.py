"""``tu-match`` command line: generate, solve, estimate, bench, verify."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import harness as hz
from . import lp
from . import shocks as sh
from .assignment import aggregate, check_optimality, full_master, solve_refined
from .estimation import EstimationError, ObservedMatching, SmmOptions, nrmse, run_smm_rroa, solve_smm_direct
from .market import SurplusBasis, TypeSpace, load_instance, save_instance
from .rroa import ChoiceSets, RroaError, build_restricted, run_rroa

log = logging.getLogger("tumatch")


def _dump(obj, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _records_out(args, name: str, columns, records) -> Path:
    out = Path(args.out_dir)
    if args.format == "json":
        path = out / f"{name}.json"
        _dump([dict(zip(columns, r.row())) for r in records], path)
    else:
        path = out / f"{name}.csv"
        hz.write_csv(path, columns, records)
    return path


# -- subcommands -------------------------------------------------------------------

def cmd_generate(args) -> int:
    out = Path(args.out_dir)
    cfg = hz.ExperimentConfig(x_count=args.x_count, y_count=args.y_count, scale=args.scale, k_count=args.k_count)
    if args.estimation:
        basis, lam, observed = hz.generate_estimation_truth(cfg, args.seed)
        observed.mu.to_csv(out / "observed.csv")
        _dump({"phi": basis.phi.tolist(), "lambda_true": _floats(lam)}, out / "basis.json")
        _dump(sh.model_to_dict(sh.IidNormal(cfg.shock_std)), out / "shock_model.json")
        print(f"wrote observed.csv, basis.json, shock_model.json to {out}")
        return 0
    inst = hz.generate_instance(cfg, args.seed)
    save_instance(inst, out / "instance.json")
    if args.shocks:
        inst.shocks.to_csv(out / "shocks.csv")
    print(f"wrote instance.json ({inst.n_women} women, {inst.n_men} men) to {out}")
    return 0


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    out = Path(args.out_dir)
    t0 = time.perf_counter()
    if args.method == "rroa":
        try:
            pi, duals, trace = run_rroa(inst, price_tol=args.price_tol, max_iters=args.max_iters, backend=args.backend)
        except RroaError as exc:
            if args.trace and exc.trace is not None:
                exc.trace.to_csv(args.trace)
            print(f"error: {exc}", file=sys.stderr)
            return 2
        obj, iters = trace.objective, trace.iterations
        if args.trace:
            trace.to_csv(args.trace)
        if args.dump_lp:
            lp.write_lp(build_restricted(inst, trace.choice_sets), args.dump_lp)
    else:
        pi, duals, obj = solve_refined(inst, backend=args.backend)
        iters = 1
        if args.dump_lp:
            lp.write_lp(full_master(inst).problem, args.dump_lp)
    ms = 1e3 * (time.perf_counter() - t0)
    mu = aggregate(pi, inst.population)
    if args.format == "json":
        _dump({"method": args.method, "objective": obj, "iterations": iters, "ms": ms,
               "mu": mu.mu.tolist(), "mu_x0": _floats(mu.mu_x0), "mu_0y": _floats(mu.mu_0y),
               "T": duals.T.tolist()}, out / "matching.json")
    else:
        mu.to_csv(out / "matching.csv")
    print(f"{args.method}: objective {obj:.17g} in {ms:.1f} ms ({iters} iterations)")
    return 0


def _estimate_single(args) -> int:
    for flag in ("observed", "basis", "shock_model"):
        if getattr(args, flag) is None:
            print(f"error: --{flag.replace('_', '-')} is required without --experiment", file=sys.stderr)
            return 2
    with open(args.basis) as fh:
        bdata = json.load(fh)
    basis = SurplusBasis(np.asarray(bdata["phi"], dtype=float))
    with open(args.shock_model) as fh:
        model = sh.model_from_dict(json.load(fh))
    X, Y, _ = basis.phi.shape
    observed = ObservedMatching.from_csv(args.observed, X, Y)
    pop = observed.population(TypeSpace(X, Y))
    seed = args.seed if args.est_seed is None else args.est_seed
    panel = sh.sample_shocks(model, pop, seed)
    opts = SmmOptions(price_tol=args.price_tol, max_iters=args.max_iters, backend=args.backend)
    try:
        res = (run_smm_rroa if args.method == "rroa" else solve_smm_direct)(panel, pop, basis, observed, opts)
    except EstimationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    result = {
        "lambda_hat": _floats(res.lambda_hat),
        "matched_moments": _floats(res.matched_moments),
        "target_moments": _floats(res.target_moments),
        "residual": res.residual,
        "objective": res.objective,
        "seed": seed,
        "trace": None if res.trace is None else {
            "iterations": res.trace.iterations, "final_columns": res.trace.final_columns, "status": res.trace.status},
    }
    if "lambda_true" in bdata:
        result["nrmse"] = nrmse(res.lambda_hat, bdata["lambda_true"])
    path = Path(args.out) if args.out else Path(args.out_dir) / "estimate.json"
    _dump(result, path)
    print("lambda_hat", " ".join(f"{v:.10g}" for v in res.lambda_hat), f"(residual {res.residual:.3g})")
    return 0


def cmd_estimate(args) -> int:
    if not args.experiment:
        return _estimate_single(args)
    base = args.seed if args.est_seed is None else args.est_seed
    kw = dict(x_count=args.x_count, y_count=args.y_count, k_count=args.k_count, base_seed=base,
              backend=args.backend, parallel_seeds=args.parallel_seeds)
    if args.full_scale:
        cfg = hz.ExperimentConfig.full_scale(**kw)
    else:
        cfg = hz.ExperimentConfig(scales=tuple(args.scales), n_seeds=args.seeds, **kw)
    records = hz.consistency_experiment(cfg)
    path = _records_out(args, "estimation", hz.ESTIMATION_COLUMNS, records)
    for r in records:
        if r.seed is None:
            print(f"S={r.S} {r.spec}: {r.nrmse:.4g} ({r.status})")
    print(f"wrote {path}")
    return 0


def cmd_bench(args) -> int:
    kw = dict(x_count=args.x_count, y_count=args.y_count, base_seed=args.seed, methods=tuple(args.methods),
              backend=args.backend)
    if args.full_scale:
        cfg = hz.ExperimentConfig.full_scale(n_seeds=args.seeds, **kw)
    else:
        cfg = hz.ExperimentConfig(scales=tuple(args.scales), n_seeds=args.seeds, **kw)
    try:
        records = hz.bench_solve(cfg)
    except hz.BenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    path = _records_out(args, "bench", hz.BENCH_COLUMNS, records)
    for r in records:
        if r.seed is None:
            print(f"({r.xcount},{r.ycount}) S={r.S}: mean speedup {r.ms:.3g}x over {r.iters} seeds")
    print(f"wrote {path}")
    return 0


def cmd_verify(args) -> int:
    """Solve both ways and check agreement, dual feasibility and the LP duality certificate."""
    inst = load_instance(args.instance)
    pi, duals, trace = run_rroa(inst, backend=args.backend)
    _, _, direct = solve_refined(inst, backend=args.backend)
    t = inst.types
    checks = []
    rel = abs(trace.objective - direct) / max(1.0, abs(direct))
    checks.append(("objective agreement", rel <= args.tol, f"relative gap {rel:.3g}"))
    viol = check_optimality(pi, duals, inst, ChoiceSets.empty(inst.n_women, inst.n_men, t.x_count, t.y_count),
                            args.price_tol)
    checks.append(("no profitable deviation", not viol, f"{len(viol)} violations"))
    M = full_master(inst)
    sol = lp.solve(M.problem, backend=args.backend)
    cert = lp.certificate(M.problem, sol)
    ok = cert["gap"] <= 1e-7 * max(1.0, abs(sol.objective)) and cert["primal"] <= 1e-7 and cert["dual"] <= 1e-7
    checks.append(("LP certificate", ok, ", ".join(f"{k} {v:.3g}" for k, v in cert.items())))
    for name, passed, detail in checks:
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    return 0 if all(p for _, p, _ in checks) else 1


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tu-match", description=__doc__)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def sizes(q, x=15, y=10):
        q.add_argument("--x-count", type=int, default=x)
        q.add_argument("--y-count", type=int, default=y)

    def solver(q):
        q.add_argument("--backend", choices=lp.BACKENDS, default="simplex")
        q.add_argument("--price-tol", type=float, default=1e-7)
        q.add_argument("--max-iters", type=int, default=None)

    q = sub.add_parser("generate", help="write a random instance or estimation dataset")
    sizes(q)
    q.add_argument("--scale", type=int, default=1)
    q.add_argument("--k-count", type=int, default=5)
    q.add_argument("--estimation", action="store_true", help="write observed.csv/basis.json/shock_model.json")
    q.add_argument("--shocks", action="store_true", help="also write the shock panel audit CSV")
    q.set_defaults(func=cmd_generate)

    q = sub.add_parser("solve", help="optimal assignment of an instance")
    q.add_argument("--instance", required=True)
    q.add_argument("--method", choices=("rroa", "direct"), default="rroa")
    solver(q)
    q.add_argument("--trace", default=None, help="per-iteration CSV")
    q.add_argument("--dump-lp", default=None, help="write the (final restricted) LP in LP text format")
    q.set_defaults(func=cmd_solve)

    q = sub.add_parser("estimate", help="moment-matching estimate, or the consistency experiment")
    q.add_argument("--observed")
    q.add_argument("--basis")
    q.add_argument("--shock-model")
    q.add_argument("--seed", dest="est_seed", type=int, default=None, help="estimation shock seed")
    q.add_argument("--out", default=None)
    q.add_argument("--method", choices=("rroa", "direct"), default="rroa")
    solver(q)
    q.add_argument("--experiment", action="store_true")
    sizes(q)
    q.add_argument("--k-count", type=int, default=5)
    q.add_argument("--scales", type=int, nargs="+", default=[1, 2, 4, 8])
    q.add_argument("--seeds", type=int, default=20)
    q.add_argument("--parallel-seeds", type=int, default=1)
    q.add_argument("--full-scale", action="store_true")
    q.set_defaults(func=cmd_estimate)

    q = sub.add_parser("bench", help="time RROA against the direct LP")
    sizes(q)
    q.add_argument("--scales", type=int, nargs="+", default=[1, 2, 4])
    q.add_argument("--seeds", type=int, default=10)
    q.add_argument("--methods", nargs="+", choices=("rroa", "direct"), default=["rroa", "direct"])
    q.add_argument("--backend", choices=lp.BACKENDS, default="simplex")
    q.add_argument("--full-scale", action="store_true")
    q.set_defaults(func=cmd_bench)

    q = sub.add_parser("verify", help="cross-check RROA, the direct LP and the optimality certificate")
    q.add_argument("--instance", required=True)
    q.add_argument("--backend", choices=lp.BACKENDS, default="simplex")
    q.add_argument("--price-tol", type=float, default=1e-7)
    q.add_argument("--tol", type=float, default=1e-7)
    q.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
