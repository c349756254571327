"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``PASS criterion N`` or ``FAIL criterion N`` line with
the measured numbers, then asserts.  A summary of all lines is printed
when the module finishes.  Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import math
import random
import statistics
import time
from dataclasses import replace

import pytest

from conftest import ident, make_ledger, make_ring
from oracles import brute_fingers, reference_walk
from raced.dht import remove_duplicates, resolve_fingers
from raced.engine import EventLoop
from raced.harness.graphs import generate_synthetic
from raced.harness.report import render
from raced.harness.simulation import SimConfig, build_network, generate_transactions, run_simulation
from raced.ledger import CHANNEL_CLOSE, CHANNEL_OPEN, HtlcStateError
from raced.routing import Fault, Payment, find_path, make_path_request, pay, validate_paths
from test_dht import distinct_nodes

LINES: dict[int, str] = {}


def verdict(pytestconfig, n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    LINES[n] = line
    capman = pytestconfig.pluginmanager.getplugin("capturemanager")
    with capman.global_and_fixture_disabled():
        print("\n" + line)
    assert ok, line


@pytest.fixture(scope="module", autouse=True)
def summary(pytestconfig):
    yield
    capman = pytestconfig.pluginmanager.getplugin("capturemanager")
    with capman.global_and_fixture_disabled():
        print("\n== acceptance summary ==")
        for n in range(1, 10):
            print(LINES.get(n, f"FAIL criterion {n}: not run"))


# -- shared desk-scale runs ----------------------------------------------------------------

def desk_run(components: int):
    spec = generate_synthetic(2000, seed=42, components=components)
    mode = "one_scc" if components == 1 else "k_scc"
    cfg = SimConfig(rh_count=8, mode=mode, seed=7)
    t0 = time.perf_counter()
    net = build_network(spec, cfg)
    opened = {c.id: c.total() for c in net.ledger.channels.values()}
    funds = net.ledger.total_funds()
    txs = generate_transactions(net, 5000, 7, mode=mode)
    res = run_simulation(spec, txs, cfg, network=net)
    return {"res": res, "opened": opened, "funds": funds, "secs": time.perf_counter() - t0}


@pytest.fixture(scope="module")
def one_scc():
    return desk_run(1)


@pytest.fixture(scope="module")
def k_scc():
    return desk_run(8)


# -- 1 ------------------------------------------------------------------------------------

def test_criterion_1_finger_tables_match_oracle(pytestconfig):
    rng = random.Random(101)
    t0 = time.perf_counter()
    rings = entries = mismatches = 0
    for _ in range(200):
        m = rng.choice([6, 16, 32])
        size = rng.randint(2, 64)
        members = sorted(rng.sample(range(2 ** m), size))
        for i in members:
            got = resolve_fingers(i, members, m)
            want = brute_fingers(i, members, m)
            entries += len(got)
            mismatches += sum(a != b for a, b in zip(got, want)) + abs(len(got) - len(want))
        rings += 1
    # a handful of fully built rings too, so the live tables are covered
    for start in range(0, 400, 100):
        ring = make_ring(distinct_nodes(rng.randint(2, 64), 16, start), m_bits=16)
        mismatches += len(ring.oracle_diff())
        for i in ring.members:
            mismatches += ring.helpers[i].finger_raw != brute_fingers(i, ring.members, 16)
    secs = time.perf_counter() - t0
    verdict(pytestconfig, 1, mismatches == 0 and secs < 10,
            f"{rings} rings, {entries} entries, {mismatches} mismatches, {secs:.2f}s")


# -- 2 ------------------------------------------------------------------------------------

def walk_lengths(members, m):
    tables = {i: [f for f in remove_duplicates(resolve_fingers(i, members, m)) if f != i]
              for i in members}
    out = []
    for a in members:
        for b in members:
            if a != b:
                path = reference_walk(a, b, tables, m)
                out.append(len(path) - 1 if path else m + 1)
    return out


@pytest.mark.slow
def test_criterion_2_logarithmic_lookup(pytestconfig, one_scc):
    parts, ok = [], True
    worst_ring = {}
    for size in (8, 16, 32, 64):
        lengths, per_ring = [], []
        for r in range(30):
            members = sorted(make_ring(distinct_nodes(size, 32, 5000 * r), deposit=10).members)
            ls = walk_lengths(members, 32)
            limit = math.ceil(math.log2(size))
            per_ring.append(sum(x <= limit for x in ls) / len(ls))
            lengths += ls
        limit = math.ceil(math.log2(size))
        frac = sum(x <= limit for x in lengths) / len(lengths)
        ok &= max(lengths) <= 32 and frac >= 0.99
        worst_ring[size] = min(per_ring)
        parts.append(f"|RH|={size}: max {max(lengths)} steps, {frac:.4f} within {limit}")

    ring = one_scc["res"].network.ring
    live = walk_lengths(ring.members, ring.cfg.m_bits)
    for a in ring.members:
        for b in ring.members:
            if a != b:
                assert len(ring.lookup_path(a, b)) - 1 == len(reference_walk(
                    a, b, {i: ring.helpers[i].finger_unique for i in ring.members}, 32)) - 1
    rep = one_scc["res"].report
    ok &= max(live) <= 3 and rep.max_ring_hops <= 3
    parts.append(f"acceptance ring: all-pairs max {max(live)}, successes max {rep.max_ring_hops}")
    parts.append("worst single ring fraction " +
                 ", ".join(f"{k}:{v:.3f}" for k, v in worst_ring.items()))
    verdict(pytestconfig, 2, ok, "; ".join(parts))


# -- 3 ------------------------------------------------------------------------------------

class Drainer:
    """A competing payer that grabs a channel's whole free balance, then gives up."""

    def __init__(self, ledger, cid, payer, hold):
        self.ledger, self.cid, self.payer, self.hold = ledger, cid, payer, hold
        self.hid = None

    def step(self, now):
        if self.hid is None:
            free = self.ledger.channels[self.cid].free(self.payer)
            self.hid = self.ledger.htlc_lock(self.cid, self.payer, free, b"\x00" * 32,
                                             now + self.hold, b"d" * 32).id
            return now + self.hold
        try:
            self.ledger.htlc_refund(self.hid)
        except HtlcStateError:
            pass
        return None


def test_criterion_3_atomicity_under_faults(pytestconfig):
    rng = random.Random(303)
    restored = 0
    kinds = {"wrong_preimage": 0, "abandon": 0, "depletion": 0}
    for trial in range(1000):
        hops = rng.randint(2, 8)
        amt = rng.randint(1, 200)
        edges = [(k, k + 1, rng.randint(amt + hops, 600), rng.randint(0, 600)) for k in range(hops)]
        # a few side channels so the vector covers untouched channels as well
        edges += [(k, hops + 1 + k, rng.randint(1, 50), rng.randint(1, 50)) for k in range(2)]
        ledger = make_ledger(edges)
        ledger.now = rng.randint(0, 50)
        before = ledger.balance_vector()
        kind = rng.choice(sorted(kinds))
        hop = rng.randrange(hops)
        kinds[kind] += 1
        p = Payment(ledger, list(range(hops + 1)), amt, txid=rng.randbytes(32),
                    preimage=rng.randbytes(16),
                    fault=None if kind == "depletion" else Fault(kind, hop))
        loop = EventLoop(ledger)
        if kind == "depletion":
            cid = ledger.channel_between(hop, hop + 1).id
            loop.schedule(Drainer(ledger, cid, hop, 500), ledger.now + hop)
        loop.schedule(p, ledger.now)
        loop.run()
        if p.status != "success" and ledger.balance_vector() == before \
                and ledger.pending_htlcs() == []:
            restored += 1
    verdict(pytestconfig, 3, restored == 1000,
            f"{restored}/1000 restored exactly ({', '.join(f'{k} {v}' for k, v in kinds.items())})")


# -- 4 ------------------------------------------------------------------------------------

def mutations(q, others, space, delta):
    other = next(x for x in others if x not in (q.i, q.next))
    yield "i", replace(q, i=(q.i + 1) % space)
    yield "i", replace(q, i=other)
    yield "next", replace(q, next=(q.next + 1) % space)
    yield "next", replace(q, next=other)
    yield "max", replace(q, max=q.max + 10)
    yield "max", replace(q, max=q.max + 1)
    yield "max", replace(q, max=q.max - 1)
    yield "max", replace(q, max=0)
    for name in ("sigma_i", "sigma_next"):
        sig = getattr(q, name)
        for pos in (0, 31, 63):
            flipped = bytearray(sig)
            flipped[pos] ^= 0x01
            yield name, replace(q, **{name: bytes(flipped)})
        yield name, replace(q, **{name: sig[:-1]})
    yield "sigma_i", replace(q, sigma_i=q.sigma_next, sigma_next=q.sigma_i)
    yield "tc", replace(q, tc=q.tc + 1)
    yield "tc", replace(q, tc=q.tc - 1)
    yield "tv", replace(q, tv=q.tv + 1)
    yield "tv", replace(q, tv=q.tv + delta)
    yield "tv", replace(q, tv=0)


@pytest.mark.slow
def test_criterion_4_tamper_detection(pytestconfig):
    rng = random.Random(404)
    caught = total = 0
    missed = []
    by_field = {}
    for r in range(3):
        ring = make_ring(distinct_nodes(8 + 4 * r, 32, 700 * r))
        space, delta = ring.cfg.space, ring.cfg.delta
        for near in ring.members[:3]:
            req = make_path_request(ident(f"sender{r}"), rng.randint(1, 100), rng)
            stack = find_path(req, near, ring, rng)
            for c_idx, cand in enumerate(stack):
                for h_idx, q in enumerate(cand.hops):
                    for field, mq in mutations(q, ring.members, space, delta):
                        hops = cand.hops[:h_idx] + (mq,) + cand.hops[h_idx + 1:]
                        bad = list(stack)
                        bad[c_idx] = replace(cand, hops=hops)
                        v = validate_paths(bad, req, near, ring.directory, ring.ledger, 0)
                        hit = (bad[c_idx] not in v.accepted and len(v.disputes) >= 1
                               and len(v.accepted) == len(stack) - 1)
                        assert mq != q
                        total += 1
                        caught += hit
                        by_field[field] = by_field.get(field, 0) + 1
                        if not hit:
                            missed.append((field, mq))

    honest = false_pos = 0
    for r in range(10):
        ring = make_ring(distinct_nodes(8, 32, 9000 + 100 * r))
        records = len(ring.ledger.records)
        for _ in range(1000):
            near = rng.choice(ring.members)
            req = make_path_request(ident(f"honest{r}"), rng.randint(1, 100), rng)
            stack = find_path(req, near, ring, rng)
            v = validate_paths(stack, req, near, ring.directory, ring.ledger,
                               rng.randrange(ring.cfg.delta))
            honest += 1
            false_pos += bool(v.disputes) or len(v.accepted) != len(stack)
        false_pos += len(ring.ledger.records) != records
    ok = total >= 1000 and caught == total and honest == 10_000 and false_pos == 0
    fields = ", ".join(f"{k} {v}" for k, v in sorted(by_field.items()))
    verdict(pytestconfig, 4, ok,
            f"{caught}/{total} mutations disputed ({fields}); {honest} honest stacks, "
            f"{false_pos} false positives" + (f"; first misses {missed[:2]}" if missed else ""))


# -- 5 ------------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_5_conservation(pytestconfig, one_scc):
    ledger = one_scc["res"].ledger
    deposits, closes = {}, {}
    for rec in ledger.records:
        if rec.kind == CHANNEL_OPEN:
            cid, _, _, a, b, _, _ = rec.fields()
            deposits[cid] = a + b
        elif rec.kind == CHANNEL_CLOSE:
            cid, _, _, a, b = rec.fields()
            closes[cid] = a + b
    bad = [cid for cid, ch in ledger.channels.items()
           if (closes[cid] if ch.state != "open" else ch.total()) != deposits[cid]]
    bad += [cid for cid, total in one_scc["opened"].items() if deposits[cid] != total]
    live = sum(t for cid, t in deposits.items() if cid not in closes)
    ok = (not bad and ledger.total_funds() == one_scc["funds"] == live
          and ledger.conservation_violations() == [] and ledger.pending_htlcs() == [])
    verdict(pytestconfig, 5, ok,
            f"{len(deposits)} channels checked against open records, {len(bad)} off, "
            f"global {one_scc['funds']} -> {ledger.total_funds()}, "
            f"{one_scc['res'].report.attempted} transactions")


# -- 6 ------------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_6_desk_scale(pytestconfig, one_scc):
    rep = one_scc["res"].report
    g = one_scc["res"].network.spec.digraph()
    degs = [g.out_degree(v) for v in g]
    ok = (rep.attempted == 5000 and rep.success_ratio >= 0.95 and rep.mean_path_len <= 12
          and one_scc["secs"] < 300)
    verdict(pytestconfig, 6, ok,
            f"success_ratio {rep.success_ratio:.4f}, mean path {rep.mean_path_len:.2f} "
            f"(sd {rep.stdev_path_len:.2f}), failures {rep.failure_counts()}, "
            f"{one_scc['secs']:.1f}s, out-degree max {max(degs)} median {statistics.median(degs)}")


# -- 7 ------------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_7_k_scc(pytestconfig, one_scc, k_scc):
    res = k_scc["res"]
    comps = res.network.components
    owner = {v: i for i, c in enumerate(comps) for v in c}
    rh_comps = {owner[r] for r in res.network.rh_nodes}
    cross = all(owner[o.path[0]] != owner[o.path[-1]] for o in res.outcomes if o.path)
    gap = abs(one_scc["res"].report.success_ratio - res.report.success_ratio)
    ok = len(rh_comps) == 8 and cross and gap <= 0.02
    verdict(pytestconfig, 7, ok,
            f"k-SCC success_ratio {res.report.success_ratio:.4f} vs 1-SCC "
            f"{one_scc['res'].report.success_ratio:.4f}, gap {100 * gap:.2f} pp, "
            f"RHs in {len(rh_comps)} components, {k_scc['secs']:.1f}s")


# -- 8 ------------------------------------------------------------------------------------

def test_criterion_8_churn_down_to_two(pytestconfig):
    rh_nodes = distinct_nodes(8, 32, 1200)
    ring0 = make_ring(rh_nodes, deposit=5000, delta=20)
    ledger = ring0.ledger
    by_id = sorted(ring0.members)
    keep = [by_id[1], by_id[5]]
    a, b = (ring0.helpers[k].node for k in keep)
    ledger.pc_open(ident("payer"), ident(a), 500, 500)
    ledger.pc_open(ident(b), ident("payee"), 500, 500)
    ring = ring0
    loop = EventLoop(ledger, ring)
    diffs = 0
    for victim in [i for i in by_id if i not in keep]:
        ring.node_leave(victim, ledger.now)
        boundary = (ledger.now // ring.cfg.delta + 1) * ring.cfg.delta
        loop.run(boundary)
        diffs += len(ring.oracle_diff())
        for i in ring.members:
            diffs += ring.helpers[i].finger_raw != brute_fingers(i, ring.members, 32)
            diffs += any(k not in ring.helpers[i].attest for k in ring.helpers[i].finger_unique)
    before = ledger.wealth("payee")
    out = pay(ring, "payer", "payee", 50, random.Random(8))
    ok = (sorted(ring.members) == sorted(keep) and diffs == 0 and out.status == "success"
          and ledger.wealth("payee") - before == 50 and out.ring_hops == 1)
    verdict(pytestconfig, 8, ok,
            f"{len(ring.members)} survivors, {diffs} oracle mismatches, payment {out.status} "
            f"via {out.path}")


# -- 9 ------------------------------------------------------------------------------------

def test_criterion_9_determinism(pytestconfig, tmp_path):
    outputs = []
    for run in range(2):
        spec = generate_synthetic(400, seed=13)
        cfg = SimConfig(rh_count=8, seed=21, rh_deposit=100_000)
        net = build_network(spec, cfg)
        txs = generate_transactions(net, 400, 21)
        res = run_simulation(spec, txs, cfg, network=net)
        res.ledger.export(tmp_path / f"ledger{run}.log")
        (tmp_path / f"report{run}.json").write_text(render(res.report))
        outputs.append(((tmp_path / f"report{run}.json").read_bytes(),
                        (tmp_path / f"ledger{run}.log").read_bytes(),
                        "\n".join(res.trace_lines()).encode()))
    same = outputs[0] == outputs[1]
    verdict(pytestconfig, 9, same,
            f"reports {len(outputs[0][0])} bytes, transcripts {len(outputs[0][1])} bytes, "
            f"{'identical' if same else 'different'}")
