"""Build a PCN plus RH ring from a :class:`NetworkSpec` and drive transactions through it."""
from __future__ import annotations

import csv
import random
import time
from dataclasses import dataclass, field

from ..dht import Ring, RingConfig, Volunteer, dht_setup
from ..engine import EventLoop
from ..identity import derive_seed, generate_identity
from ..ledger import Ledger
from ..routing import NoPathError, RoutingParams, Transaction, TransactionOutcome, find_path_to_rh
from .graphs import ConfigError, NetworkSpec, select_rhs, strongly_connected
from .report import MetricsReport, summarize

MODES = {"1scc": "one_scc", "kscc": "k_scc", "one_scc": "one_scc", "k_scc": "k_scc"}


@dataclass(frozen=True)
class SimConfig:
    rh_count: int = 8
    mode: str = "one_scc"
    m_bits: int = 32
    delta: int = 100
    fee: int = 1
    seed: int = 7
    htlc_delta: int = 10
    max_bucket: int = 10
    rh_deposit: int = 1_000_000
    fee_reserve: int = 6
    arrival: str = "all"
    arrival_rate: float = 1.0
    random_ties: bool = False

    def __post_init__(self):
        if self.rh_count < 2:
            raise ConfigError(f"rh_count must be >= 2, got {self.rh_count}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.arrival not in ("all", "poisson"):
            raise ConfigError(f"unknown arrival process {self.arrival!r}")
        if self.fee < 0 or self.htlc_delta < 1:
            raise ConfigError("fee must be >= 0 and htlc_delta >= 1")

    @property
    def ring_config(self) -> RingConfig:
        return RingConfig(m_bits=self.m_bits, delta=self.delta, max_bucket=self.max_bucket,
                          deposit=self.rh_deposit)

    @property
    def routing_params(self) -> RoutingParams:
        return RoutingParams(fee=self.fee, htlc_delta=self.htlc_delta,
                             fee_reserve=self.fee_reserve, random_ties=self.random_ties)


@dataclass(frozen=True)
class TxRequest:
    idx: int
    sender: int
    receiver: int
    amount: int


@dataclass
class Network:
    spec: NetworkSpec
    ledger: Ledger
    ring: Ring
    rh_nodes: list[int]
    components: list[set] = field(default_factory=list)


@dataclass
class SimResult:
    report: MetricsReport
    outcomes: list[TransactionOutcome]
    network: Network

    @property
    def ledger(self) -> Ledger:
        return self.network.ledger

    def trace_lines(self) -> list[str]:
        return [o.trace_line() for o in self.outcomes]


def rh_address(node: int) -> bytes:
    return f"rh/{node}".encode()


def build_network(spec: NetworkSpec, cfg: SimConfig) -> Network:
    """Keys for every node, one ledger channel per edge, then the RH ring."""
    mode = MODES[cfg.mode]
    rhs = select_rhs(spec, cfg.rh_count, mode)
    ledger = Ledger()
    idents = {v: generate_identity(derive_seed(cfg.seed, v), node_ref=v) for v in spec.nodes}
    for ident in idents.values():
        ledger.register(ident)
    for src, dst, a, b in spec.edges:
        ledger.pc_open(idents[src], idents[dst], a, b)
    vols = [Volunteer(idents[v], rh_address(v)) for v in rhs]
    ring = dht_setup(vols, cfg.ring_config, ledger, now=ledger.now)
    return Network(spec, ledger, ring, rhs, strongly_connected(spec))


def generate_transactions(net: Network, count: int, seed: int, *, mode: str = "one_scc",
                          amount_range: tuple[int, int] = (1, 100), fee: int = 1,
                          fee_reserve: int = 6, max_tries: int | None = None) -> list[TxRequest]:
    """Sample ``count`` transactions that are feasible on the initial balances.

    Feasible means the sender has a liquidity-feasible leg to some RH and
    some RH has one to the receiver.  In ``k_scc`` mode the two ends come
    from different SCCs; otherwise both come from the largest SCC.
    """
    mode = MODES[mode]
    rng = random.Random(seed)
    ledger, rh_nodes = net.ledger, net.ring.rh_nodes()
    comps = net.components
    comp_of = {v: c for c, members in enumerate(comps) for v in members}
    if mode == "k_scc":
        pool = sorted(v for c in comps[:len(rh_nodes)] for v in c)
    else:
        pool = sorted(comps[0])
    if len(pool) < 2:
        raise ConfigError("not enough nodes to sample transactions from")
    lo, hi = amount_range
    out: list[TxRequest] = []
    tries = 0
    limit = max_tries if max_tries is not None else 50 * count
    while len(out) < count:
        tries += 1
        if tries > limit:
            raise ConfigError(f"only {len(out)} feasible transactions after {limit} draws")
        s, r = rng.sample(pool, 2)
        if mode == "k_scc" and comp_of[s] == comp_of[r]:
            continue
        amt = rng.randint(lo, hi)
        try:
            find_path_to_rh(ledger, s, rh_nodes, amt, fee=fee, downstream=fee_reserve)
            find_path_to_rh(ledger, r, rh_nodes, amt, fee=fee, direction="from_rh")
        except NoPathError:
            continue
        out.append(TxRequest(len(out), s, r, amt))
    return out


def arrival_ticks(n: int, cfg: SimConfig, start: int) -> list[int]:
    if cfg.arrival == "all":
        return [start] * n
    rng = random.Random(f"{cfg.seed}/arrivals")
    t, out = float(start), []
    for _ in range(n):
        t += rng.expovariate(cfg.arrival_rate)
        out.append(int(t))
    return out


def run_simulation(spec: NetworkSpec, txs: list[TxRequest], cfg: SimConfig, *,
                   network: Network | None = None, with_wall: bool = False) -> SimResult:
    """Route every transaction concurrently on one event clock."""
    wall = time.perf_counter()
    net = network or build_network(spec, cfg)
    ledger = net.ledger
    loop = EventLoop(ledger, net.ring)
    params = cfg.routing_params
    actors = []
    for tx, tick in zip(txs, arrival_ticks(len(txs), cfg, ledger.now)):
        rng = random.Random(f"{cfg.seed}/tx/{tx.idx}")
        actor = Transaction(net.ring, tx.sender, tx.receiver, tx.amount, rng, params)
        actors.append(actor)
        loop.schedule(actor, tick)
    loop.run()
    outcomes = [a.outcome for a in actors]
    report = summarize(outcomes, with_wall=with_wall)
    if with_wall:
        report.wall["total_s"] = time.perf_counter() - wall
    return SimResult(report, outcomes, net)


def load_transactions(path) -> list[TxRequest]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            try:
                idx, s, r, amt = (int(x) for x in row)
            except ValueError:
                if lineno == 1:
                    continue
                raise ValueError(f"line {lineno}: malformed transaction row {row!r}") from None
            out.append(TxRequest(idx, s, r, amt))
    return out


def write_transactions(txs: list[TxRequest], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        for t in txs:
            w.writerow((t.idx, t.sender, t.receiver, t.amount))
