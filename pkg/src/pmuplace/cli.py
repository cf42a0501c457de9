"""Command-line front end.

Subcommands: pf, simulate, gramian, place, estimate, robustness, sweep,
compare. Every result file embeds the experiment manifest (tool version,
case hash, settings, seeds) so outputs are reproducible byte-for-byte aside
from wall-clock timing fields. Exit codes: 0 success, 2 validation error,
3 numerical failure, 4 guard violation.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, backend
from .dynamics import build_fault_schedule, simulate
from .errors import GuardError, NumericalError, PmuPlaceError, ValidationError
from .estimation import (
    EstimatorConfig,
    method1_scenario,
    method2_scenario,
    run_estimation,
    spawn_seed,
)
from .gramian import GramianConfig, empirical_gramian, logdet, min_max_eigenvalue, per_generator_bank
from .network import init_steady_state, load_case, solve_power_flow
from .placement import exhaustive, greedy, mads
from .robustness import contingency_study, fluctuation_study

_SOLVERS = {"exhaustive": exhaustive, "greedy": greedy, "mads": mads}


def _fmt(x):
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def write_manifest_sidecar(out_path, args, **extra):
    """CSV outputs carry their manifest in a sidecar so the data file stays
    plain comma-separated values."""
    side = Path(str(out_path) + ".manifest.json")
    write_json(side, {"manifest": manifest(args, **extra)})


def manifest(args, **extra):
    case_path = getattr(args, "case", None)
    digest = ""
    if case_path:
        digest = hashlib.sha256(Path(case_path).read_bytes()).hexdigest()[:16]
    entry = {
        "tool": "pmuplace",
        "version": __version__,
        "backend": backend.active_backend(),
        "subcommand": args.command,
        "case": str(case_path) if case_path else None,
        "case_sha256": digest,
        "model": getattr(args, "model", None),
        "seed": getattr(args, "seed", None),
        "out": str(getattr(args, "out", None)),
    }
    entry.update(extra)
    return entry


def _model_order(args):
    return {"m1": "second", "m2": "fourth"}[args.model]


def _parse_ids(text):
    try:
        ids = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ValidationError(f"could not parse id list '{text}'") from None
    if not ids:
        raise ValidationError("empty id list")
    return ids


def _parse_branch(text):
    parts = text.split(":")
    if len(parts) != 2:
        raise ValidationError(f"branch must be given as from:to, got '{text}'")
    return int(parts[0]), int(parts[1])


def _parse_range(text):
    parts = text.split(":")
    if len(parts) != 2:
        raise ValidationError(f"range must be given as lo:hi, got '{text}'")
    lo, hi = int(parts[0]), int(parts[1])
    if lo < 1 or hi < lo:
        raise ValidationError(f"invalid range {lo}:{hi}")
    return list(range(lo, hi + 1))


def _thread_count(args):
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("PMUPLACE_THREADS", "")
    if env.strip():
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"PMUPLACE_THREADS must be an integer, got '{env}'") from None
    return 1


def _run_indexed(jobs, n_workers):
    """Run index-keyed jobs, collecting results in job order regardless of
    scheduling."""
    if n_workers <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        futures = [pool.submit(job) for job in jobs]
        return [f.result() for f in futures]


# --- subcommands ---------------------------------------------------------------


def cmd_pf(args):
    case = load_case(args.case)
    pf = solve_power_flow(case, tol=args.tol, max_iter=args.max_iter)
    payload = {
        "manifest": manifest(args, tol=args.tol, max_iter=args.max_iter),
        "converged": pf.converged,
        "iterations": pf.iterations,
        "max_mismatch": pf.max_mismatch,
        "buses": [
            {
                "id": b.id,
                "v_mag": float(pf.v_mag[i]),
                "v_ang_deg": float(np.degrees(pf.v_ang[i])),
                "p_inj": float(pf.p_inj[i]),
                "q_inj": float(pf.q_inj[i]),
            }
            for i, b in enumerate(case.buses)
        ],
    }
    write_json(args.out, payload)
    if not args.quiet:
        print(f"power flow {'converged' if pf.converged else 'DID NOT converge'} "
              f"in {pf.iterations} iterations (max mismatch {pf.max_mismatch:.3e})")
    return 0 if pf.converged else 3


def cmd_simulate(args):
    case = load_case(args.case)
    order = _model_order(args)
    pf = solve_power_flow(case)
    model = init_steady_state(case, pf, order)
    if args.fault:
        schedule = build_fault_schedule(
            case, _parse_branch(args.fault), order, pf=pf, base_model=model
        )
        traj = simulate(schedule, model.x0, args.horizon, args.dt)
    else:
        traj = simulate(model, model.x0, args.horizon, args.dt)

    g = model.g
    names = [f"delta_{i}" for i in model.gen_ids] + [f"omega_{i}" for i in model.gen_ids]
    if order == "fourth":
        ids4 = [model.gen_ids[k] for k in model.idx_fourth]
        names += [f"eq_prime_{i}" for i in ids4] + [f"ed_prime_{i}" for i in ids4]
    rows = [[t] + list(x) for t, x in zip(traj.t, traj.states)]
    write_csv(args.out, ["time"] + names, rows)

    if order == "second":
        out_names = [f"delta_{i}" for i in model.gen_ids] + [f"omega_{i}" for i in model.gen_ids]
    else:
        out_names = []
        for block in ("e_r", "e_i", "i_r", "i_i"):
            out_names += [f"{block}_{i}" for i in model.gen_ids]
    out_path = Path(args.out).with_suffix(".outputs.csv")
    write_csv(out_path, ["time"] + out_names, [[t] + list(y) for t, y in zip(traj.t, traj.outputs)])
    write_manifest_sidecar(args.out, args, fault=args.fault, dt=args.dt,
                           horizon=args.horizon)
    if not args.quiet:
        print(f"wrote {len(traj.t)} samples to {args.out} and {out_path}")
    return 0


def cmd_gramian(args):
    case = load_case(args.case)
    order = _model_order(args)
    pf = solve_power_flow(case)
    model = init_steady_state(case, pf, order)
    cfg = GramianConfig(t_f=args.tf, dt=args.dt)
    instrumented = _parse_ids(args.pmu_at)
    w = empirical_gramian(model, instrumented, cfg)
    ld = logdet(w)
    smin, smax = min_max_eigenvalue(w)
    payload = {
        "manifest": manifest(args, pmu_at=instrumented, tf=args.tf, dt=args.dt),
        "n": w.n,
        "matrix": [float(v) for v in w.matrix.reshape(-1)],
        "config_fingerprint": cfg.fingerprint(model),
        "logdet": ld,
        "sigma_min": smin,
        "sigma_max": smax,
        # reporting-only measures; optimization always drives on logdet
        "trace": float(np.trace(w.matrix)),
        "condition_number": float(smax / smin) if smin > 0 else float("inf"),
    }
    write_json(args.out, payload)
    if not args.quiet:
        print(f"gramian n={w.n} logdet={ld:.4f} sigma_min={smin:.4g} sigma_max={smax:.4g}")
    return 0


def _bank_for(args, case, order, cfg):
    pf = solve_power_flow(case)
    model = init_steady_state(case, pf, order)
    return model, per_generator_bank(model, cfg)


def cmd_place(args):
    case = load_case(args.case)
    order = _model_order(args)
    cfg = GramianConfig(t_f=args.tf, dt=args.dt)
    t0 = time.perf_counter()
    model, bank = _bank_for(args, case, order, cfg)
    solver = _SOLVERS[args.solver]
    if args.solver == "mads":
        placement = solver(bank, args.pmus, seed=args.seed, budget=args.budget)
    else:
        placement = solver(bank, args.pmus)
    wall = time.perf_counter() - t0
    smin, _ = min_max_eigenvalue(bank.joint(placement.selected))
    payload = {
        "manifest": manifest(args, solver=args.solver, pmus=args.pmus,
                             budget=args.budget, config_fingerprint=bank.fingerprint),
        "placement": list(placement.selected),
        "logdet": placement.objective,
        "sigma_min": smin,
        "solver": placement.solver,
        "evaluations": placement.evaluations,
        "converged": placement.converged,
        "wall_time_s": wall,
    }
    write_json(args.out, payload)
    if not args.quiet:
        print(f"optimal placement {list(placement.selected)} logdet {placement.objective:.4f} "
              f"({placement.evaluations} evaluations, {wall:.2f}s)")
    return 0


def cmd_estimate(args):
    case = load_case(args.case)
    order = _model_order(args)
    pf = solve_power_flow(case)
    model = init_steady_state(case, pf, order)
    placement = _parse_ids(args.placement)
    cfg = EstimatorConfig()
    out_dir = Path(args.out)
    schedule = None
    if args.scenario == "method2":
        if not args.fault:
            raise ValidationError("--fault from:to is required for method2")
        schedule = build_fault_schedule(case, _parse_branch(args.fault), order,
                                        pf=pf, base_model=model)

    def one_run(i):
        run_seed = int(spawn_seed(args.seed, i).generate_state(1)[0])
        if args.scenario == "method1":
            sc = method1_scenario(model, seed=run_seed)
        else:
            sc = method2_scenario(case, _parse_branch(args.fault), order,
                                  seed=run_seed, schedule=schedule)
        return run_estimation(sc, placement, cfg)

    runs = _run_indexed([lambda i=i: one_run(i) for i in range(args.runs)],
                        _thread_count(args))

    rows = []
    for i, run in enumerate(runs):
        rows.append([i, run.seed, int(run.diverged),
                     run.errors.get("delta", float("nan")),
                     run.errors.get("omega", float("nan")),
                     run.convergent.get("delta", 0)])
        if not args.no_per_run_csv:
            names = [f"truth_{k}" for k in range(model.n)] + [f"est_{k}" for k in range(model.n)]
            write_csv(out_dir / f"run_{i:03d}.csv", ["time"] + names,
                      [[t] + list(x) + list(e)
                       for t, x, e in zip(run.t, run.truth, run.estimate)])
    write_csv(out_dir / "runs.csv",
              ["run", "seed", "diverged", "e_delta", "e_omega", "n_delta"], rows)

    ok = [r for r in runs if not r.diverged]
    summary = {
        "manifest": manifest(args, scenario=args.scenario, placement=placement,
                             runs=args.runs, fault=args.fault),
        "e_delta_mean": float(np.mean([r.errors["delta"] for r in ok])) if ok else float("nan"),
        "e_omega_mean": float(np.mean([r.errors["omega"] for r in ok])) if ok else float("nan"),
        "n_delta_mean": float(np.mean([r.convergent["delta"] for r in runs])),
        "diverged_count": sum(r.diverged for r in runs),
    }
    write_json(out_dir / "summary.json", summary)
    if not args.quiet:
        print(f"{args.runs} runs: e_delta {summary['e_delta_mean']:.4g} "
              f"e_omega {summary['e_omega_mean']:.4g} "
              f"N_delta {summary['n_delta_mean']:.2f} "
              f"diverged {summary['diverged_count']}")
    return 0


def cmd_robustness(args):
    case = load_case(args.case)
    order = _model_order(args)
    gbars = _parse_range(args.pmus_range)
    cfg = GramianConfig(t_f=args.tf, dt=args.dt)
    if args.mode == "fluctuation":
        report = fluctuation_study(case, order, gbars, n_cases=args.cases,
                                   seed=args.seed, cfg=cfg)
    else:
        report = contingency_study(case, order, gbars, n_cases=args.cases,
                                   seed=args.seed, cfg=cfg)
    payload = {"manifest": manifest(args, mode=args.mode, cases=args.cases,
                                    pmus_range=args.pmus_range)}
    payload.update(report.to_dict())
    write_json(args.out, payload)
    if not args.quiet:
        ratios = ", ".join(f"gbar={k}: {v:.3f}" for k, v in report.mean_ratios.items())
        print(f"{args.mode} mean overlap ratios: {ratios}")
    return 0


def cmd_sweep(args):
    case = load_case(args.case)
    order = _model_order(args)
    cfg = GramianConfig(t_f=args.tf, dt=args.dt)
    model, bank = _bank_for(args, case, order, cfg)
    gbars = _parse_range(args.pmus_range)
    rows = []
    for k in gbars:
        t0 = time.perf_counter()
        if args.solver == "mads":
            p = mads(bank, k, seed=args.seed, budget=args.budget)
        else:
            p = _SOLVERS[args.solver](bank, k)
        wall = time.perf_counter() - t0
        smin, _ = min_max_eigenvalue(bank.joint(p.selected))
        rows.append([k, p.objective, smin,
                     ";".join(str(i) for i in p.selected), wall])
        if not args.quiet:
            print(f"gbar={k}: logdet {p.objective:.4f} sigma_min {smin:.4g} "
                  f"placement {list(p.selected)}")
    write_csv(args.out, ["g_bar", "logdet", "sigma_min", "placement", "time_s"], rows)
    write_manifest_sidecar(args.out, args, solver=args.solver,
                           pmus_range=args.pmus_range, budget=args.budget,
                           config_fingerprint=bank.fingerprint)
    return 0


def cmd_compare(args):
    case = load_case(args.case)
    order = _model_order(args)
    pf = solve_power_flow(case)
    model = init_steady_state(case, pf, order)
    cfg_g = GramianConfig(t_f=args.tf, dt=args.dt)
    bank = per_generator_bank(model, cfg_g)
    cfg_e = EstimatorConfig()
    gbars = _parse_range(args.pmus_range)
    scenarios = [
        method1_scenario(model, seed=int(spawn_seed(args.seed, i).generate_state(1)[0]))
        for i in range(args.runs)
    ]
    rng = np.random.default_rng(spawn_seed(args.seed, 10**6))
    rows = []
    for k in gbars:
        optimal = mads(bank, k, seed=args.seed)
        random_sel = tuple(
            sorted(int(model.gen_ids[j]) for j in rng.choice(model.g, size=k, replace=False))
        )

        def batch(placement):
            runs = _run_indexed(
                [lambda sc=sc: run_estimation(sc, placement, cfg_e) for sc in scenarios],
                _thread_count(args),
            )
            ok = [r for r in runs if not r.diverged]
            e_d = float(np.mean([r.errors["delta"] for r in ok])) if ok else float("nan")
            n_d = float(np.mean([r.convergent["delta"] for r in runs]))
            return e_d, n_d, sum(r.diverged for r in runs)

        e_opt, n_opt, div_opt = batch(optimal.selected)
        e_rnd, n_rnd, div_rnd = batch(random_sel)
        rows.append([k,
                     ";".join(str(i) for i in optimal.selected), e_opt, n_opt, div_opt,
                     ";".join(str(i) for i in random_sel), e_rnd, n_rnd, div_rnd])
        if not args.quiet:
            print(f"gbar={k}: optimal {list(optimal.selected)} e_delta {e_opt:.4g} "
                  f"N_delta {n_opt:.2f} | random {list(random_sel)} "
                  f"e_delta {e_rnd:.4g} N_delta {n_rnd:.2f}")
    write_csv(args.out,
              ["g_bar", "optimal", "e_delta_optimal", "n_delta_optimal", "diverged_optimal",
               "random", "e_delta_random", "n_delta_random", "diverged_random"],
              rows)
    write_manifest_sidecar(args.out, args, pmus_range=args.pmus_range,
                           runs=args.runs, config_fingerprint=bank.fingerprint)
    return 0


# --- parser --------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pmuplace",
        description="Optimal PMU placement via empirical observability Gramians",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=True):
        p.add_argument("--case", required=True, help="case JSON file")
        if model:
            p.add_argument("--model", choices=("m1", "m2"), default="m1")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("pf", help="solve the power flow")
    common(p, model=False)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=30)
    p.set_defaults(func=cmd_pf)

    p = sub.add_parser("simulate", help="integrate the dynamic model")
    common(p)
    p.add_argument("--fault", default=None, help="branch from:to for a staged fault")
    p.add_argument("--dt", type=float, default=1.0 / 120.0)
    p.add_argument("--horizon", type=float, default=5.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gramian", help="empirical observability Gramian")
    common(p)
    p.add_argument("--pmu-at", required=True, help="instrumented generator ids, comma separated")
    p.add_argument("--tf", type=float, default=5.0)
    p.add_argument("--dt", type=float, default=1.0 / 30.0)
    p.set_defaults(func=cmd_gramian)

    p = sub.add_parser("place", help="solve the optimal placement problem")
    common(p)
    p.add_argument("--pmus", type=int, required=True)
    p.add_argument("--solver", choices=tuple(_SOLVERS), default="mads")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--tf", type=float, default=5.0)
    p.add_argument("--dt", type=float, default=1.0 / 30.0)
    p.set_defaults(func=cmd_place)

    p = sub.add_parser("estimate", help="dynamic state estimation runs")
    common(p)
    p.add_argument("--placement", required=True, help="instrumented ids, comma separated")
    p.add_argument("--scenario", choices=("method1", "method2"), default="method1")
    p.add_argument("--fault", default=None)
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--no-per-run-csv", action="store_true",
                   help="suppress the per-run trajectory CSV files")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("robustness", help="placement stability study")
    common(p)
    p.add_argument("--mode", choices=("fluctuation", "contingency"), required=True)
    p.add_argument("--cases", type=int, default=6)
    p.add_argument("--pmus-range", default="1:2")
    p.add_argument("--tf", type=float, default=5.0)
    p.add_argument("--dt", type=float, default=1.0 / 30.0)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("sweep", help="optimal placement for a range of PMU counts")
    common(p)
    p.add_argument("--pmus-range", required=True)
    p.add_argument("--solver", choices=tuple(_SOLVERS), default="mads")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--tf", type=float, default=5.0)
    p.add_argument("--dt", type=float, default=1.0 / 30.0)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="optimal vs random placement estimation quality")
    common(p)
    p.add_argument("--pmus-range", required=True)
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--tf", type=float, default=5.0)
    p.add_argument("--dt", type=float, default=1.0 / 30.0)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except GuardError as exc:
        print(f"guard violation: {exc}", file=sys.stderr)
        return 4
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except PmuPlaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
