"""Command-line entry point: ``resest {check,simulate,generate,percolate}``.

Exit codes: 0 success, 1 bad input, 2 infeasible scenario (simulate without
``--force``), 3 MEDAG design phase failed, 4 exhaustive search too large.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigurationError, DesignPhaseError, ScaleLimitError
from .graph_analysis import (DEFAULT_MAX_NODES, find_pair_cut, is_strongly_r_robust,
                             max_tolerable_f_bound, minimal_critical_sets, percolate)
from .netgen import from_edge_list_text, generate, to_edge_list_text
from .scenario_io import gen_spec_table, load_scenario, parse_gen_spec
from .simulator import run, summarize
from .spectral import build_basis, check_source_cardinality

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_DESIGN, EXIT_SCALE = 0, 1, 2, 3, 4


def _labels(nodes) -> str:
    return "{" + ",".join(str(i + 1) for i in sorted(nodes)) + "}"


def _yes(flag: bool) -> str:
    return "yes" if flag else "no"


def _eig(lam: complex) -> str:
    if abs(lam.imag) == 0:
        return f"{lam.real:.6g}"
    return f"{lam.real:.6g}{lam.imag:+.6g}j"


def cmd_check(args) -> int:
    doc = load_scenario(args.scenario)
    sc = doc.scenario
    basis = build_basis(sc.plant, sc.transform, sc.block_form)
    f = sc.f
    out = [f"nodes: {sc.net.node_count}; edges: {len(sc.net.edges)}; f = {f}"]
    for j, b in enumerate(basis.blocks):
        if not b.is_unstable:
            continue
        src = basis.source_sets[j]
        tag = " (needs consensus)" if j in basis.omega_u else " (every node is a source)"
        out.append(f"block {j}, eigenvalue {_eig(b.eigenvalue)}: sources {_labels(src)}{tag}")
        if j in basis.omega_u:
            r2, r3 = 2 * f + 1, 3 * f + 1
            out.append(f"  strongly {r2}-robust: {_yes(is_strongly_r_robust(sc.net, src, r2))}; "
                       f"strongly {r3}-robust: {_yes(is_strongly_r_robust(sc.net, src, r3))}")
    card = check_source_cardinality(basis, f)
    out.append(f"source cardinality >= {card.required}: {_yes(card.ok)}"
               + ("" if card.ok else f" (failing blocks {list(card.failing)})"))
    for w in sc.attack.warnings(sc.net, f):
        out.append(f"warning: {w}")
    if args.exhaustive:
        crits = minimal_critical_sets(sc.plant, args.max_nodes)
        out.append("minimal critical sets: " + (", ".join(_labels(c) for c in crits) or "none"))
        for kind in ("local", "total"):
            for c in crits:
                cut = find_pair_cut(sc.net, c, f, kind, args.max_nodes)
                if cut is None:
                    out.append(f"{f}-{kind} pair cut w.r.t. {_labels(c)}: none")
                else:
                    out.append(f"{f}-{kind} pair cut w.r.t. {_labels(c)}: {_labels(cut.cut)} "
                               f"split {_labels(cut.part_one)}/{_labels(cut.part_two)}")
        out.append(f"tolerable f bound: {max_tolerable_f_bound(sc.plant, sc.net, args.max_nodes)}")
    print("\n".join(out))
    return EXIT_OK


def cmd_simulate(args) -> int:
    doc = load_scenario(args.scenario)
    sc = doc.scenario
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    if args.rounds is not None:
        sc = replace(sc, rounds=args.rounds)
    basis = build_basis(sc.plant, sc.transform, sc.block_form)
    r = 3 * sc.f + 1 if sc.attack.design_deviators() else 2 * sc.f + 1
    failing = [j for j in sorted(basis.omega_u) if not is_strongly_r_robust(sc.net, basis.source_sets[j], r)]
    if failing and not args.force:
        print(f"error: network is not strongly {r}-robust for blocks {failing}; use --force to run anyway",
              file=sys.stderr)
        return EXIT_INFEASIBLE
    try:
        trace = run(sc)
    except DesignPhaseError as exc:
        idle = _labels(i for i, c in exc.counters.items() if not c)
        print(f"error: design phase failed: {exc}; nodes never activated: {idle}", file=sys.stderr)
        return EXIT_DESIGN
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace.write_csv(out / "trace.csv")
    for j, m in trace.medags.items():
        (out / f"medag_block{j}.txt").write_text(m.to_text())
    summary = {
        "metadata": {**trace.metadata,
                     "medag_digests": {str(j): d for j, d in trace.metadata["medag_digests"].items()},
                     "trace_digest": trace.digest()},
        "nodes": {
            str(i + 1): {
                "final_error": s.final_error,
                "max_error": s.max_error,
                "first_round_below": {format(t, "g"): v for t, v in s.first_below.items()},
                "diverging": s.diverging,
            } for i, s in summarize(trace).items()},
        "flag_events": [{"round": e.round, "node": e.node + 1, "sender": e.sender + 1} for e in trace.flags],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out / 'trace.csv'} ({len(trace.records)} records)")
    return EXIT_OK


def cmd_generate(args) -> int:
    spec = parse_gen_spec(Path(args.spec).read_text())
    net = generate(spec)
    table = gen_spec_table(spec)
    header = {k: v for k, v in table.items() if k != "seed_graph"}
    if spec.seed_graph is not None:
        header["seed_graph_nodes"] = spec.seed_graph.node_count
        header["seed_sources"] = " ".join(str(i + 1) for i in sorted(spec.seed_sources))
    Path(args.out).write_text(to_edge_list_text(net, header))
    return EXIT_OK


def cmd_percolate(args) -> int:
    path = Path(args.network)
    if path.suffix == ".toml":
        net = load_scenario(path).scenario.net
    else:
        net = from_edge_list_text(path.read_text())
    seeds = set()
    for tok in args.seeds.split(","):
        lab = int(tok)
        if not 1 <= lab <= net.node_count:
            raise ConfigurationError(f"seed label {lab} outside 1..{net.node_count}")
        seeds.add(lab - 1)
    active, rounds = percolate(net, seeds, args.r)
    for q, layer in enumerate(rounds):
        print(f"round {q}: {_labels(layer)}")
    print(f"percolates: {_yes(len(active) == net.node_count)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="resest", description="Resilient distributed state estimation toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="feasibility report for a scenario")
    c.add_argument("scenario")
    c.add_argument("--exhaustive", action="store_true", help="critical sets, pair cuts and the f bound")
    c.add_argument("--max-nodes", type=int, default=DEFAULT_MAX_NODES)
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("simulate", help="run a scenario and write trace.csv, summary.json, MEDAG files")
    s.add_argument("scenario")
    s.add_argument("out_dir")
    s.add_argument("--force", action="store_true", help="run even if the robustness condition fails")
    s.add_argument("--seed", type=int)
    s.add_argument("--rounds", type=int)
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("generate", help="write a random network from a [generate] spec")
    g.add_argument("spec")
    g.add_argument("out")
    g.set_defaults(func=cmd_generate)

    q = sub.add_parser("percolate", help="bootstrap percolation from a seed set")
    q.add_argument("network", help="edge-list file or scenario (.toml)")
    q.add_argument("--seeds", required=True, help="comma-separated 1-based labels")
    q.add_argument("-r", type=int, required=True, help="activation threshold")
    q.set_defaults(func=cmd_percolate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScaleLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCALE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
