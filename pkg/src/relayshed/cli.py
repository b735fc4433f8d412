"""Command-line surface: lower-bound runs, sweeps, theory checks, generators.

Exit codes: 0 success, 1 usage error, 2 solver error, 3 instance parse
error, 4 enumeration cap exceeded, 5 theory check failed. Power values
print in per unit with two decimals; CSV/JSON artifacts keep full
precision.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from relayshed import flows, instances, interdiction, oracle
from relayshed.netmodel import (
    CaseFormatError,
    NetworkDataError,
    aggregate_generators,
    budget_from_percentage,
    Budget,
    generate_relay_map,
    load_instance,
    save_instance,
    total_demand,
)
from relayshed.solvers import BackendCapabilityError, SolveOptions, SolverError, get_backend

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER = 2
EXIT_PARSE = 3
EXIT_CAP = 4
EXIT_CHECK_FAILED = 5


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load(path: str):
    net, relays = load_instance(path)
    if relays is None:
        relays = generate_relay_map(net)
    return net, relays


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=1)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    print(text)


def _usage(message: str):
    print(f"error: {message}", file=sys.stderr)
    raise SystemExit(EXIT_USAGE)


def _budget_from_args(args, n_relays: int) -> Budget:
    if (args.budget_pct is None) == (args.budget_count is None):
        _usage("exactly one of --budget-pct / --budget-count is required")
    if args.budget_pct is not None:
        return budget_from_percentage(args.budget_pct, n_relays)
    if args.budget_count < 0 or args.budget_count > n_relays:
        _usage(f"--budget-count must lie in [0, {n_relays}]")
    return Budget(count=args.budget_count)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_nflb(args) -> int:
    net, relays = _load(args.instance)
    budget = _budget_from_args(args, len(relays.relays))
    backend = get_backend(args.backend)
    opts = SolveOptions(time_limit_s=args.time_limit, random_seed=args.seed)
    report = interdiction.nflb(net, relays, budget, opts, backend)
    print(f"NFLB: {report.dcopf_value:.2f} pu")
    print(f"restriction MILP value: {report.milp_value:.2f} pu")
    print(f"MILP status: {report.milp_result.status} gap: {report.milp_result.gap:.4f}")
    print(f"MILP time: {report.milp_result.wall_time_s:.2f} s")
    print(f"DCOPF time: {report.lp_result.wall_time_s:.2f} s")
    print(f"attacked relays: {' '.join(sorted(map(str, report.attack.attacked))) or '-'}")
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=1), encoding="utf-8")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = interdiction.ExperimentConfig.from_file(args.config)
    if args.out:
        config.out_dir = args.out
    if args.time_limit is not None:
        config.time_limit_s = args.time_limit
    rows = interdiction.run_experiment(config, backend=get_backend(args.backend),
                                       jobs=args.jobs)
    for row in rows:
        print(f"{row.instance} {row.budget_pct:g}% U={row.budget_count} "
              f"NFLB={row.nflb:.2f} pu ({row.status})")
    print(f"CSV: {Path(config.out_dir) / 'sweep.csv'}")
    return EXIT_OK


def _theory_tu(args) -> dict:
    net, _ = _load(args.instance)
    matrix = oracle.assemble_Gh(aggregate_generators(net))
    report = oracle.verify_total_unimodularity(matrix, budget=args.cap)
    return {
        "check": "tu",
        "pass": report.ok,
        "rows": matrix.matrix.shape[0],
        "cols": matrix.matrix.shape[1],
        "method": report.method,
        "exhaustive": report.exhaustive,
        "subsets_or_minors_checked": report.checked,
        "counterexample": report.counterexample,
    }


def _theory_duals(args) -> dict:
    net, relays = _load(args.instance)
    budget = args.budget_count if args.budget_count is not None else min(
        2, len(relays.relays))
    report = oracle.audit_vertex_duals(net, relays, budget, cap=args.cap,
                                       backend=get_backend(args.backend))
    return {
        "check": "duals",
        "pass": report.max_abs_dual <= 1.0 + 1e-6,
        "max_abs_dual": report.max_abs_dual,
        "attacks_audited": report.n_attacks,
        "worst_attack": sorted(map(str, report.worst_attack)),
        "worst_variable": list(map(str, report.worst_variable)),
    }


def _theory_thm2(args) -> dict:
    net, _ = _load(args.instance)
    rng = np.random.default_rng(args.seed)
    dec = flows.block_decomposition(net)
    counterexamples = []
    applicable = 0
    vacuous = 0
    for _ in range(args.trials):
        d = rng.normal(size=len(net.buses))
        d -= d.mean()
        if not dec.non_tree_edges:
            vacuous += 1  # trees: Ohm's law never binds
            continue
        report = flows.theorem2_threshold(net, l1_of_d=float(np.abs(d).sum()))
        min_limit = min(net.lines[net.line_index[k]].limit for k in dec.non_tree_edges)
        if report.threshold > 0:
            d *= min_limit / report.threshold  # place the instance exactly at the threshold
        ok, _witness = flows.flow_polytope_feasible(net, d)
        if not ok:
            continue  # hypothesis fails; trial not applicable
        applicable += 1
        feasible, isf = flows.dcopf_feasible(net, d)
        if not feasible:
            limits = np.array([ln.limit for ln in net.lines])
            worst = int(np.argmax(np.abs(isf) - limits))
            counterexamples.append({
                "injections": d.tolist(),
                "edge": str(net.lines[worst].id),
                "isf_flow": float(isf[worst]),
                "limit": float(limits[worst]),
            })
    return {
        "check": "thm2",
        "pass": not counterexamples,
        "trials": args.trials,
        "applicable": applicable,
        "vacuous": vacuous,
        "counterexamples": counterexamples[:3],
    }


def _theory_prop4(args) -> dict:
    inst = flows.gen_proposition4(args.n)
    fp_ok, _ = flows.flow_polytope_feasible(inst.net, inst.injections)
    dcopf_ok, isf = flows.dcopf_feasible(inst.net, inst.injections)
    cert_flow, cert_limit = inst.saturation_certificate()
    chord = inst.net.lines[inst.net.line_index[inst.direct_edge_id]]
    passed = fp_ok and not dcopf_ok and abs(cert_flow - args.n) <= 1e-8 \
        and abs(cert_flow - 2.0 * cert_limit) <= 1e-8
    verdict = "PASS" if passed else "FAIL"
    print(f"{verdict}: flow-polytope feasible, DCOPF {'in' if not dcopf_ok else ''}feasible, "
          f"violating edge ({chord.from_bus},{chord.to_bus}) "
          f"flow {cert_flow:.2f} vs limit {cert_limit:.2f}")
    return {
        "check": "prop4",
        "pass": passed,
        "n": args.n,
        "flow_polytope_feasible": fp_ok,
        "dcopf_feasible": dcopf_ok,
        "violating_edge": [chord.from_bus, chord.to_bus],
        "saturation_flow": cert_flow,
        "limit": cert_limit,
        "isf_flow_on_edge": float(isf[inst.net.line_index[inst.direct_edge_id]]),
    }


def _theory_isf(args) -> dict:
    net, _ = _load(args.instance)
    rng = np.random.default_rng(args.seed)
    worst_residual = 0.0
    worst_ref_dev = 0.0
    n_mat = flows.incidence_matrix(net)
    refs = [b.id for b in net.buses[: min(3, len(net.buses))]]
    for _ in range(args.trials):
        d = rng.normal(size=len(net.buses))
        d -= d.mean()
        base = flows.isf_flow(net, d, ref_bus=refs[0])
        residual = float(np.abs(n_mat @ base - d).max())
        worst_residual = max(worst_residual, residual / max(1.0, float(np.abs(d).max())))
        for ref in refs[1:]:
            dev = float(np.abs(flows.isf_flow(net, d, ref_bus=ref) - base).max())
            worst_ref_dev = max(worst_ref_dev, dev)
    return {
        "check": "isf",
        "pass": worst_residual <= 1e-8 and worst_ref_dev <= 1e-8,
        "trials": args.trials,
        "max_balance_residual": worst_residual,
        "max_ref_bus_deviation": worst_ref_dev,
    }


def cmd_theory(args) -> int:
    runner = {
        "tu": _theory_tu,
        "duals": _theory_duals,
        "thm2": _theory_thm2,
        "prop4": _theory_prop4,
        "isf": _theory_isf,
    }[args.check]
    doc = runner(args)
    _emit(doc, args.out)
    return EXIT_OK if doc["pass"] else EXIT_CHECK_FAILED


def cmd_gen(args) -> int:
    if args.kind == "prop4":
        if args.n is None:
            _usage("gen prop4 requires --n")
        inst = flows.gen_proposition4(args.n)
        net = inst.net
    else:
        if args.buses is None:
            _usage("gen random requires --buses")
        net = instances.random_network(args.buses, seed=args.seed)
    relays = generate_relay_map(net)
    save_instance(args.out, net, relays)
    print(f"wrote {args.out}: {len(net.buses)} buses, {len(net.lines)} lines, "
          f"{len(net.generators)} generators, total demand {total_demand(net):.2f} pu")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="relayshed",
                     description="Worst-case relay attack interdiction toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("nflb", help="two-step network flow lower bound")
    p.add_argument("instance")
    p.add_argument("--budget-pct", type=float, default=None)
    p.add_argument("--budget-count", type=int, default=None)
    p.add_argument("--time-limit", type=float, default=600.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", default=None)
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.set_defaults(func=cmd_nflb)

    p = sub.add_parser("sweep", help="budget sweep over instances, resumable CSV")
    p.add_argument("config", help="experiment config JSON")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None, help="override the output directory")
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--backend", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("theory", help="executable checks of the supporting theory")
    p.add_argument("check", choices=["tu", "duals", "thm2", "prop4", "isf"])
    p.add_argument("instance", nargs="?", default=None)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", type=int, default=300_000)
    p.add_argument("--budget-count", type=int, default=None)
    p.add_argument("--backend", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("gen", help="write a native-JSON instance")
    p.add_argument("kind", choices=["prop4", "random"])
    p.add_argument("out")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--buses", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.command == "theory" and args.check in ("tu", "duals", "thm2", "isf") \
                and not args.instance:
            _usage(f"theory {args.check} requires an instance path")
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except oracle.CapExceededError as exc:
        print(f"cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (CaseFormatError, NetworkDataError, json.JSONDecodeError,
            FileNotFoundError, KeyError) as exc:
        print(f"instance error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (SolverError, BackendCapabilityError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
