"""Command-line entry point: ``raced sim`` and ``raced dht-check``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness.graphs import GraphError, generate_synthetic, load_graph, parse_synthetic
from .harness.report import emit_report, render
from .harness.simulation import (
    SimConfig,
    build_network,
    generate_transactions,
    load_transactions,
    run_simulation,
)


def _spec_from_args(args):
    if args.graph:
        return load_graph(args.graph)
    return generate_synthetic(**parse_synthetic(args.synthetic))


def _add_graph_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--graph", help="channel CSV: src,dst,lw_src_to_dst,lw_dst_to_src")
    src.add_argument("--synthetic", help="generator parameters, e.g. n=2000,seed=42")
    p.add_argument("--rh-count", type=int, default=8)
    p.add_argument("--mode", choices=["1scc", "kscc"], default="1scc")
    p.add_argument("--m-bits", type=int, default=32)
    p.add_argument("--delta", type=int, default=100)
    p.add_argument("--seed", type=int, default=7)


def cmd_sim(args) -> int:
    spec = _spec_from_args(args)
    cfg = SimConfig(rh_count=args.rh_count, mode=args.mode, m_bits=args.m_bits,
                    delta=args.delta, fee=args.fee, seed=args.seed, htlc_delta=args.htlc_delta,
                    arrival=args.arrival, arrival_rate=args.arrival_rate,
                    rh_deposit=args.rh_deposit)
    net = build_network(spec, cfg)
    if args.txs.isdigit() and not Path(args.txs).exists():
        txs = generate_transactions(net, int(args.txs), args.seed, mode=args.mode, fee=cfg.fee,
                                    fee_reserve=cfg.fee_reserve)
    else:
        txs = load_transactions(args.txs)
    result = run_simulation(spec, txs, cfg, network=net, with_wall=args.wall)
    if args.out:
        emit_report(result.report, args.out, args.format)
    else:
        sys.stdout.write(render(result.report, args.format or "json"))
    if args.traces:
        with open(args.traces, "w", encoding="utf-8") as fh:
            fh.write("txid,status,path,t_pathfind_ticks,t_route_ticks,disputes\n")
            fh.writelines(line + "\n" for line in result.trace_lines())
    if args.ledger:
        result.ledger.export(args.ledger)
    return 0


def cmd_dht_check(args) -> int:
    spec = _spec_from_args(args)
    cfg = SimConfig(rh_count=args.rh_count, mode=args.mode, m_bits=args.m_bits,
                    delta=args.delta, seed=args.seed)
    ring = build_network(spec, cfg).ring
    for line in ring.dump_lines():
        print(line)
    diff = ring.oracle_diff()
    print(f"# oracle diff: {len(diff)} mismatches")
    for line in diff:
        print(line)
    return 1 if diff else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="raced", description="RH-ring payment routing simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("sim", help="route a batch of transactions and report metrics")
    _add_graph_args(sim)
    sim.add_argument("--txs", required=True,
                     help="transaction CSV (idx,sender_id,receiver_id,amount) or a count to generate")
    sim.add_argument("--fee", type=int, default=1)
    sim.add_argument("--htlc-delta", type=int, default=10)
    sim.add_argument("--rh-deposit", type=int, default=1_000_000,
                     help="each RH's deposit into every ring channel it opens")
    sim.add_argument("--arrival", choices=["all", "poisson"], default="all")
    sim.add_argument("--arrival-rate", type=float, default=1.0)
    sim.add_argument("--out")
    sim.add_argument("--format", choices=["json", "kv"])
    sim.add_argument("--traces")
    sim.add_argument("--ledger")
    sim.add_argument("--wall", action="store_true", help="include wall-clock timings")
    sim.set_defaults(func=cmd_sim)

    chk = sub.add_parser("dht-check", help="dump the RH ring and diff fingers against brute force")
    _add_graph_args(chk)
    chk.set_defaults(func=cmd_dht_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (GraphError, OSError, ValueError) as exc:
        print(f"raced: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
