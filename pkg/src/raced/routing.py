"""Transaction pipeline: path discovery, validation, endRH choice, HTLC routing.

One payment goes through these stages:

1. the sender finds a liquidity-feasible hop-shortest path to its nearest
   RH (``nearRH``) and sends it a signed :class:`PathRequest`;
2. ``nearRH`` collects a stack of :class:`PathCandidate` values, one per
   reachable RH, each a chain of :class:`QTuple` copies of live max-amount
   attestations (:func:`find_path`);
3. the sender checks every tuple and writes a dispute record for anything
   that does not verify (:func:`validate_paths`);
4. the receiver picks the endRH it can reach in the fewest hops
   (:func:`select_end_rh`) and the sender takes the shortest candidate
   ending there (:func:`choose_path`);
5. the concatenated path is paid with a chain of HTLCs (:class:`Payment`).

Hop-shortest searches break ties by the highest bottleneck balance and then
by the lowest node sequence, or randomly when given an RNG.
"""
from __future__ import annotations

import hashlib
import random
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Hashable, Iterable, Sequence

from .dht import MaxAmountRecord, Ring
from .encoding import canonical, node_key
from .identity import DecodeError, Identity, raw_sign, raw_verify
from .ledger import (
    HtlcExpiredError,
    Ledger,
    LedgerError,
    digest,
)

SUCCESS = "success"
NO_PATH = "no_path"
VALIDATION_FAILED = "validation_failed"
LIQUIDITY_FAILED = "liquidity_failed"
TIMEOUT = "timeout"
STATUSES = (SUCCESS, NO_PATH, VALIDATION_FAILED, LIQUIDITY_FAILED, TIMEOUT)

TXID_BYTES = 32
PATHID_BYTES = 32
PREIMAGE_BYTES = 16


class RoutingError(Exception):
    pass


class NoPathError(RoutingError):
    pass


class FindPathAborted(RoutingError):
    """A helper rejected the sender's amount signature."""


class ChoosePathError(RoutingError):
    pass


# -- messages -------------------------------------------------------------------

@dataclass(frozen=True)
class PathRequest:
    txid: bytes
    amt: int
    sigma_amt: bytes
    VK_sender: bytes

    def message(self) -> bytes:
        return canonical("path-request", self.txid, self.amt)

    def verify(self) -> bool:
        try:
            return raw_verify(self.VK_sender, self.message(), self.sigma_amt)
        except DecodeError:
            return False


def make_path_request(sender: Identity, amt: int, rng: random.Random) -> PathRequest:
    k = rng.randbytes(PREIMAGE_BYTES)
    txid = hashlib.sha256(k).digest()
    msg = canonical("path-request", txid, amt)
    return PathRequest(txid, amt, raw_sign(sender.SK, msg), sender.VK)


@dataclass(frozen=True)
class QTuple:
    i: int
    next: int
    max: int
    sigma_i: bytes
    sigma_next: bytes
    tc: int
    tv: int

    @classmethod
    def from_record(cls, rec: MaxAmountRecord) -> "QTuple":
        return cls(rec.i, rec.k, rec.max_ik, rec.sigma_i, rec.sigma_k, rec.tc, rec.tv)

    def message(self) -> bytes:
        return canonical("max-amount", self.i, self.next, self.max, self.tc, self.tv)


@dataclass(frozen=True)
class PathCandidate:
    txid: bytes
    pathid: bytes
    hops: tuple[QTuple, ...]
    end_rh: int

    @property
    def rh_ids(self) -> list[int]:
        return [self.hops[0].i] + [q.next for q in self.hops] if self.hops else []


class PathStack(list):
    """The stack returned by ``nearRH``; ``rounds`` counts sequential message round trips."""

    rounds: int = 0


@dataclass
class Validation:
    accepted: list[PathCandidate]
    disputes: list[int]
    rejected: list[tuple[PathCandidate, str]]


@dataclass
class TransactionOutcome:
    txid: bytes
    status: str
    path: list = field(default_factory=list)
    path_len: int = 0
    ring_hops: int = 0
    t_pathfind: int = 0
    t_route: int = 0
    disputes: list[int] = field(default_factory=list)
    wall_pathfind: float = 0.0
    wall_route: float = 0.0

    def trace_line(self) -> str:
        path = ";".join(str(n) for n in self.path)
        disputes = ";".join(map(str, self.disputes))
        return f"{self.txid.hex()},{self.status},{path},{self.t_pathfind},{self.t_route},{disputes}"


# -- hop-shortest liquidity-feasible search -----------------------------------------

def _reverse_layers(ledger: Ledger, roots: Iterable, amt: int, fee: int, extra: int,
                    done: Callable[[dict], bool]) -> dict:
    """Hop distance *to* ``roots`` over edges that can carry the payment.

    An edge ``u -> v`` with ``v`` at distance ``d`` must have
    ``lw_{u,v} >= amt + fee * (d + extra)``: the amount plus one fee per
    intermediary still ahead of it.  Expansion stops after the first layer
    for which ``done(dist)`` holds.
    """
    adj, channels = ledger._adj, ledger.channels
    dist = {r: 0 for r in roots}
    frontier = sorted(dist, key=node_key)
    d = 0
    while frontier and not done(dist):
        need = amt + fee * (d + extra)
        nxt = []
        for v in frontier:
            for u, cid in adj.get(v, {}).items():
                if u not in dist and channels[cid].free(u) >= need:
                    dist[u] = d + 1
                    nxt.append(u)
        frontier = nxt
        d += 1
    return dist


def _feasible_steps(ledger: Ledger, x, dist: dict, amt: int, fee: int, extra: int):
    dx = dist[x]
    need = amt + fee * (dx - 1 + extra)
    for y, cid in ledger._adj.get(x, {}).items():
        if dist.get(y) == dx - 1:
            lw = ledger.channels[cid].free(x)
            if lw >= need:
                yield y, lw


def _bottlenecks(ledger: Ledger, start, dist: dict, amt: int, fee: int, extra: int) -> dict:
    """Best achievable bottleneck from each node on the shortest-path DAG."""
    best: dict = {}
    order = [start]
    seen = {start}
    for x in order:
        for y, _ in _feasible_steps(ledger, x, dist, amt, fee, extra):
            if y not in seen:
                seen.add(y)
                order.append(y)
    for x in sorted(order, key=lambda n: dist[n]):
        if dist[x] == 0:
            best[x] = float("inf")
            continue
        best[x] = max((min(lw, best[y]) for y, lw in _feasible_steps(ledger, x, dist, amt, fee, extra)),
                      default=-1)
    return best


def _trace(ledger: Ledger, start, dist: dict, best: dict, amt: int, fee: int, extra: int,
           tie_rng: random.Random | None) -> list:
    target = best[start]
    path = [start]
    x = start
    while dist[x] > 0:
        ok = sorted((y for y, lw in _feasible_steps(ledger, x, dist, amt, fee, extra)
                     if min(lw, best[y]) >= target), key=node_key)
        x = tie_rng.choice(ok) if tie_rng is not None else ok[0]
        path.append(x)
    return path


def find_path_to_rh(ledger: Ledger, endpoint, rh_nodes: Iterable, amt: int, *,
                    fee: int = 1, direction: str = "to_rh", downstream: int = 1,
                    tie_rng: random.Random | None = None) -> list:
    """Hop-shortest liquidity-feasible path between ``endpoint`` and the nearest RH.

    ``direction="to_rh"`` returns ``[endpoint, ..., nearRH]`` for a sender;
    ``downstream`` is the number of fee-charging intermediaries from the RH
    onward (at least the RH itself).  ``direction="from_rh"`` returns
    ``[endRH, ..., endpoint]`` for a receiver.
    """
    rhs = set(rh_nodes)
    if endpoint not in ledger._adj:
        raise NoPathError(f"unknown node {endpoint!r}")
    if not rhs:
        raise NoPathError("no routing helpers")
    if direction == "to_rh":
        if endpoint in rhs:
            return [endpoint]
        dist = _reverse_layers(ledger, rhs, amt, fee, downstream, lambda d: endpoint in d)
        if endpoint not in dist:
            raise NoPathError(f"{endpoint!r} reaches no RH with {amt}")
        best = _bottlenecks(ledger, endpoint, dist, amt, fee, downstream)
        return _trace(ledger, endpoint, dist, best, amt, fee, downstream, tie_rng)
    if direction == "from_rh":
        dist = _reverse_layers(ledger, [endpoint], amt, fee, 0, lambda d: any(r in d for r in rhs))
        reached = [r for r in rhs if r in dist]
        if not reached:
            raise NoPathError(f"no RH reaches {endpoint!r} with {amt}")
        hop = min(dist[r] for r in reached)
        nearest = [r for r in reached if dist[r] == hop]
        scored = []
        for r in nearest:
            best = _bottlenecks(ledger, r, dist, amt, fee, 0)
            scored.append((best[r], r, best))
        top = max(s[0] for s in scored)
        tied = sorted((s for s in scored if s[0] == top), key=lambda s: node_key(s[1]))
        _, r, best = tie_rng.choice(tied) if tie_rng is not None else tied[0]
        return _trace(ledger, r, dist, best, amt, fee, 0, tie_rng)
    raise ValueError(f"unknown direction {direction!r}")


def receiver_hop_counts(ledger: Ledger, receiver, rh_nodes: Iterable, amt: int,
                        fee: int = 1) -> dict:
    """Feasible hop count from each reachable RH node to ``receiver`` (nearest layer only)."""
    rhs = set(rh_nodes)
    if receiver not in ledger._adj:
        return {}
    dist = _reverse_layers(ledger, [receiver], amt, fee, 0, lambda d: any(r in d for r in rhs))
    return {r: dist[r] for r in rhs if r in dist}


# -- Find Path ------------------------------------------------------------------------

def find_path(req: PathRequest, near_rh: int, ring: Ring, rng: random.Random) -> PathStack:
    """Build the candidate stack at ``near_rh`` for every RH that can carry ``req.amt``.

    Finger entries whose cap covers the amount become one-hop candidates.
    Every other RH is reached by a greedy finger walk driven from
    ``near_rh``; each hop must be covered by the forwarding RH's cap, and a
    walk that hits a short cap (or no cap) is dropped.  Walks stop after
    ``m`` steps.
    """
    amt = req.amt
    if not req.verify():
        raise FindPathAborted(f"nearRH {near_rh} rejected the amount signature")
    verified = {near_rh}

    def contact(rh: int) -> None:
        if rh not in verified:
            if not req.verify():
                raise FindPathAborted(f"RH {rh} rejected the amount signature")
            verified.add(rh)

    stack = PathStack()
    fingers = ring.helper(near_rh).finger_unique
    for i in fingers:
        contact(i)
        rec = ring.attestation(near_rh, i)
        if rec is not None and amt <= rec.max_ik:
            stack.append(PathCandidate(req.txid, rng.randbytes(PATHID_BYTES),
                                       (QTuple.from_record(rec),), i))
    rounds = 1 if fingers else 0
    pending = [p for p in ring.members if p != near_rh and p not in fingers]
    for p in pending:
        cur = near_rh
        hops: list[QTuple] = []
        for _ in range(ring.cfg.m_bits):
            nxt = ring.ft_lookup(cur, p)
            contact(cur)
            rounds += 1
            rec = ring.attestation(cur, nxt)
            if rec is None or amt > rec.max_ik:
                break
            hops.append(QTuple.from_record(rec))
            cur = nxt
            if cur == p:
                stack.append(PathCandidate(req.txid, rng.randbytes(PATHID_BYTES), tuple(hops), p))
                break
    stack.rounds = rounds
    return stack


# -- Path Validation -------------------------------------------------------------------

def validate_paths(stack: Sequence[PathCandidate], req: PathRequest, near_rh: int,
                   directory: dict[int, bytes], ledger: Ledger, now: int) -> Validation:
    """Sender-side check of every candidate; cheating becomes a public dispute.

    Per tuple, in order: the amount fits under the cap, each signature
    verifies, the attestation has not expired.  A cap too small, a bad
    signature, a broken hop chain or a reused ``pathid`` is written to the
    ledger and the candidate dropped.  A genuine but expired tuple drops the
    candidate silently; a forged validity tick fails its signature first.
    """
    amt, VK = req.amt, req.VK_sender
    accepted: list[PathCandidate] = []
    rejected: list[tuple[PathCandidate, str]] = []
    disputes: list[int] = []

    def vk_ok(rh: int, msg: bytes, sig: bytes) -> bool:
        vk = directory.get(rh)
        if vk is None:
            return False
        try:
            return raw_verify(vk, msg, sig)
        except DecodeError:
            return False

    counts: dict[bytes, int] = {}
    for cand in stack:
        counts[cand.pathid] = counts.get(cand.pathid, 0) + 1
    near_vk = directory.get(near_rh, b"")
    for pathid in sorted(p for p, c in counts.items() if c > 1):
        disputes.append(ledger.bc_write("duplicate-pathid", near_vk, VK, pathid, pathid))

    for cand in stack:
        if counts[cand.pathid] > 1:
            rejected.append((cand, "duplicate-pathid"))
            continue
        if cand.txid != req.txid:
            disputes.append(ledger.bc_write("txid-mismatch", near_vk, VK, cand.txid, cand.pathid))
            rejected.append((cand, "txid-mismatch"))
            continue
        hops = cand.hops
        chained = (len(hops) > 0 and hops[0].i == near_rh and hops[-1].next == cand.end_rh
                   and all(a.next == b.i for a, b in zip(hops, hops[1:])))
        if not chained:
            disputes.append(ledger.bc_write("malformed-path", near_vk, VK, cand.pathid))
            rejected.append((cand, "malformed-path"))
            continue
        reason = None
        for q in hops:
            if amt > q.max:
                disputes.append(ledger.bc_write("amount-exceeds-max", q.i, q.next, amt, q.max, VK))
                reason = reason or "amount-exceeds-max"
            else:
                msg = q.message()
                if not vk_ok(q.i, msg, q.sigma_i):
                    disputes.append(ledger.bc_write("bad-signature", q.next, q.i, q.max, q.sigma_i, VK))
                    reason = reason or "bad-signature"
                elif not vk_ok(q.next, msg, q.sigma_next):
                    disputes.append(ledger.bc_write("bad-signature", q.i, q.next, q.max, q.sigma_next, VK))
                    reason = reason or "bad-signature"
                elif now >= q.tv:
                    reason = reason or "expired"
        if reason is None:
            accepted.append(cand)
        else:
            rejected.append((cand, reason))
    return Validation(accepted, disputes, rejected)


# -- endRH choice ----------------------------------------------------------------------

def select_end_rh(ledger: Ledger, ring: Ring, receiver, candidates: Sequence[PathCandidate],
                  amt: int, fee: int = 1) -> int:
    """The offered endRH with the fewest feasible hops to ``receiver``; ties go to the lowest id."""
    offered = sorted({c.end_rh for c in candidates})
    node_to_id = {ring.helpers[r].node: r for r in offered if r in ring.helpers}
    counts = receiver_hop_counts(ledger, receiver, node_to_id, amt, fee)
    if not counts:
        raise NoPathError(f"receiver {receiver!r} reaches none of {offered}")
    return min((hc, node_to_id[n]) for n, hc in counts.items())[1]


def choose_path(accepted: Sequence[PathCandidate], end_rh: int) -> PathCandidate:
    matching = [c for c in accepted if c.end_rh == end_rh]
    if not matching:
        raise ChoosePathError(f"no accepted candidate ends at {end_rh}")
    return min(matching, key=lambda c: len(c.hops))


# -- HTLC chain ------------------------------------------------------------------------

@dataclass(frozen=True)
class Fault:
    """Misbehaviour injected into one payment.

    ``abandon``: the payer of hop ``hop`` never locks it.
    ``wrong_preimage``: the receiver withholds X and the payee of ``hop``
    tries to claim with a guess.
    ``withhold``: the payee of ``hop`` learns X but never claims upstream.
    """

    kind: str
    hop: int

    def __post_init__(self):
        if self.kind not in ("abandon", "wrong_preimage", "withhold"):
            raise ValueError(f"unknown fault kind {self.kind!r}")


def hop_amounts(n_hops: int, amt: int, fee: int) -> list[int]:
    """Amount locked on each hop: ``amt`` plus one fee per intermediary after the payer."""
    return [amt + fee * (n_hops - 1 - h) for h in range(n_hops)]


class Payment:
    """HTLC chain along ``path`` as a tick-driven state machine.

    Forward pass locks one hop per tick.  Hop ``h`` expires at
    ``t0 + L + (L - h) * htlc_delta``, strictly decreasing toward the
    receiver.  The backward pass claims one hop per tick.  Any pending
    lock left by a failure is refunded at its own timeout.
    """

    def __init__(self, ledger: Ledger, path: Sequence, amt: int, *, txid: bytes,
                 preimage: bytes, fee: int = 1, htlc_delta: int = 10,
                 fault: Fault | None = None, channels: Sequence[int | None] | None = None):
        if len(path) < 2:
            raise ValueError("a payment path needs at least two nodes")
        self.ledger = ledger
        self.path = list(path)
        self.channels = list(channels) if channels is not None else [None] * (len(path) - 1)
        if len(self.channels) != len(self.path) - 1:
            raise ValueError("need one channel entry per hop")
        self.amt = amt
        self.txid = txid
        self.preimage = preimage
        self.digest_Y = digest(preimage)
        self.fee = fee
        self.htlc_delta = htlc_delta
        self.fault = fault
        self.n = len(self.path) - 1
        self.amounts = hop_amounts(self.n, amt, fee)
        self.htlcs: list[int | None] = [None] * self.n
        self.status: str | None = None
        self.disputes: list[int] = []
        self.t0: int | None = None
        self.t_end: int | None = None
        self._phase = "forward"
        self._next_hop = 0

    def _fail(self, status: str, now: int) -> int | None:
        self.status = status
        self._phase = "refund"
        return self._refund_step(now)

    def _refund_step(self, now: int) -> int | None:
        ledger = self.ledger
        waiting = []
        for hid in self.htlcs:
            if hid is None or ledger.htlcs[hid].state != "pending":
                continue
            h = ledger.htlcs[hid]
            if now >= h.timeout:
                ledger.htlc_refund(hid)
            else:
                waiting.append(h.timeout)
        if waiting:
            return min(waiting)
        self.t_end = now
        self._phase = "done"
        return None

    def step(self, now: int) -> int | None:
        if self.t0 is None:
            self.t0 = now
            self._base = now + self.n
        if self._phase == "forward":
            return self._forward(now)
        if self._phase == "backward":
            return self._backward(now)
        if self._phase == "refund":
            return self._refund_step(now)
        return None

    def _forward(self, now: int) -> int | None:
        h = self._next_hop
        if self.fault is not None and self.fault.kind == "abandon" and self.fault.hop == h:
            return self._fail(TIMEOUT, now)
        payer, payee = self.path[h], self.path[h + 1]
        cid = self.channels[h]
        ch = self.ledger.channel_between(payer, payee) if cid is None else self.ledger.channels[cid]
        timeout = self._base + (self.n - h) * self.htlc_delta
        try:
            if ch is None:
                raise LedgerError(f"no channel {payer!r}->{payee!r}")
            self.htlcs[h] = self.ledger.htlc_lock(ch.id, payer, self.amounts[h],
                                                  self.digest_Y, timeout, self.txid).id
        except LedgerError:
            return self._fail(LIQUIDITY_FAILED, now)
        self._next_hop += 1
        if self._next_hop == self.n:
            self._phase = "backward"
            self._next_hop = self.n - 1
        return now + 1

    def _backward(self, now: int) -> int | None:
        h = self._next_hop
        f = self.fault
        if f is not None and f.kind == "wrong_preimage":
            guess = bytes(b ^ 0xFF for b in self.preimage)
            self.ledger.htlc_fulfill(self.htlcs[f.hop], guess)
            return self._fail(TIMEOUT, now)
        if f is not None and f.kind == "withhold" and f.hop == h:
            return self._fail(TIMEOUT, now)
        try:
            ok = self.ledger.htlc_fulfill(self.htlcs[h], self.preimage)
        except HtlcExpiredError:
            hid = self.htlcs[h]
            htlc = self.ledger.htlcs[hid]
            self.disputes.append(self.ledger.bc_write(
                "uncollectable-htlc", self.txid, hid, str(htlc.payer), str(htlc.payee), htlc.amount))
            return self._fail(TIMEOUT, now)
        if not ok:
            return self._fail(TIMEOUT, now)
        if h == 0:
            self.status = SUCCESS
            self.t_end = now
            self._phase = "done"
            return None
        self._next_hop -= 1
        return now + 1

    @property
    def done(self) -> bool:
        return self._phase == "done"


def route_payment(ledger: Ledger, path: Sequence, amt: int, *, fee: int = 1,
                  htlc_delta: int = 10, rng: random.Random | None = None,
                  fault: Fault | None = None, ring: Ring | None = None,
                  channels: Sequence[int | None] | None = None) -> TransactionOutcome:
    """Pay ``amt`` along a fixed node ``path`` and run the clock until it settles.

    ``channels`` pins the channel used per hop; ``None`` entries use the
    ordinary PCN channel between the two nodes.
    """
    from .engine import EventLoop

    rng = rng or random.Random()
    txid = hashlib.sha256(rng.randbytes(PREIMAGE_BYTES)).digest()
    pay = Payment(ledger, path, amt, txid=txid, preimage=rng.randbytes(PREIMAGE_BYTES),
                  fee=fee, htlc_delta=htlc_delta, fault=fault, channels=channels)
    loop = EventLoop(ledger, ring)
    start = ledger.now
    wall = time.perf_counter()
    loop.schedule(pay, start)
    loop.run()
    return TransactionOutcome(
        txid=txid, status=pay.status, path=list(path), path_len=pay.n,
        t_route=pay.t_end - start, disputes=list(pay.disputes),
        wall_route=time.perf_counter() - wall,
    )


# -- end-to-end transaction ----------------------------------------------------------

@dataclass
class RoutingParams:
    fee: int = 1
    htlc_delta: int = 10
    fee_reserve: int = 6
    random_ties: bool = False


class Transaction:
    """Full pipeline for one (sender, receiver, amount), driven by an event loop.

    ``tamper`` lets tests play a malicious ``nearRH``: it receives the stack
    and returns the one actually delivered to the sender.
    """

    def __init__(self, ring: Ring, sender, receiver, amt: int, rng: random.Random,
                 params: RoutingParams | None = None, *,
                 tamper: Callable[[PathStack], Sequence[PathCandidate]] | None = None,
                 fault: Fault | None = None):
        self.ring = ring
        self.ledger = ring.ledger
        self.sender = sender
        self.receiver = receiver
        self.amt = amt
        self.rng = rng
        self.params = params or RoutingParams()
        self.tamper = tamper
        self.fault = fault
        self.tie_rng = rng if self.params.random_ties else None
        self.outcome = TransactionOutcome(txid=b"", status="")
        self.stack: Sequence[PathCandidate] = []
        self.payment: Payment | None = None
        self._phase = "pathfind"
        self._t0 = 0
        self._route_start = 0
        self._sender_leg: list = []

    def _finish(self, status: str, now: int) -> None:
        self.outcome.status = status
        self._phase = "done"

    def step(self, now: int) -> int | None:
        handler = getattr(self, "_" + self._phase)
        return handler(now)

    def _pathfind(self, now: int) -> int | None:
        self._t0 = now
        wall = time.perf_counter()
        ledger, ring, p = self.ledger, self.ring, self.params
        ident = ledger.identities.get(self.sender)
        if ident is None or self.receiver not in ledger._adj or self.sender == self.receiver:
            self.outcome.txid = hashlib.sha256(self.rng.randbytes(PREIMAGE_BYTES)).digest()
            self._finish(NO_PATH, now)
            return None
        req = make_path_request(ident, self.amt, self.rng)
        self.req = req
        self.outcome.txid = req.txid
        try:
            leg = find_path_to_rh(ledger, self.sender, ring.rh_nodes(), self.amt, fee=p.fee,
                                  downstream=p.fee_reserve, tie_rng=self.tie_rng)
            self.near_rh = ring.id_of_node(leg[-1])
            stack = find_path(req, self.near_rh, ring, self.rng)
        except (NoPathError, FindPathAborted):
            self.outcome.wall_pathfind = time.perf_counter() - wall
            self._finish(NO_PATH, now)
            return None
        self._sender_leg = leg
        rounds = stack.rounds
        self.stack = list(self.tamper(stack)) if self.tamper else stack
        self.outcome.wall_pathfind = time.perf_counter() - wall
        # request up the sender leg, sequential helper rounds, stack back, endRH exchange
        delay = 2 * (len(leg) - 1) + 2 * rounds + 2
        self._phase = "choose"
        return now + delay

    def _choose(self, now: int) -> int | None:
        wall = time.perf_counter()
        ledger, ring, p = self.ledger, self.ring, self.params
        check = validate_paths(self.stack, self.req, self.near_rh, ring.directory, ledger, now)
        self.outcome.disputes.extend(check.disputes)
        self.outcome.t_pathfind = now - self._t0
        try:
            if not check.accepted:
                raise ChoosePathError("no candidate survived validation")
            end_rh = select_end_rh(ledger, ring, self.receiver, check.accepted, self.amt, p.fee)
            cand = choose_path(check.accepted, end_rh)
            tail = find_path_to_rh(ledger, self.receiver, [ring.helpers[end_rh].node], self.amt,
                                   fee=p.fee, direction="from_rh", tie_rng=self.tie_rng)
        except NoPathError:
            self.outcome.wall_pathfind += time.perf_counter() - wall
            self._finish(NO_PATH, now)
            return None
        except ChoosePathError:
            self.outcome.wall_pathfind += time.perf_counter() - wall
            self._finish(NO_PATH if not self.stack else VALIDATION_FAILED, now)
            return None
        ids = cand.rh_ids
        ring_nodes = [ring.helpers[r].node for r in ids]
        path = self._sender_leg + ring_nodes[1:] + tail[1:]
        backing = [ring.backing(a, b) for a, b in zip(ids, ids[1:])]
        channels = ([None] * (len(self._sender_leg) - 1)
                    + [None if ch is None else ch.id for ch in backing]
                    + [None] * (len(tail) - 1))
        self.outcome.path = path
        self.outcome.path_len = len(path) - 1
        self.outcome.ring_hops = len(cand.hops)
        self.outcome.wall_pathfind += time.perf_counter() - wall
        self.payment = Payment(ledger, path, self.amt, txid=self.req.txid,
                               preimage=self.rng.randbytes(PREIMAGE_BYTES), fee=p.fee,
                               htlc_delta=p.htlc_delta, fault=self.fault, channels=channels)
        self._route_start = now
        self._phase = "route"
        return now

    def _route(self, now: int) -> int | None:
        wall = time.perf_counter()
        nxt = self.payment.step(now)
        self.outcome.wall_route += time.perf_counter() - wall
        if nxt is None:
            self.outcome.t_route = self.payment.t_end - self._route_start
            self.outcome.disputes.extend(self.payment.disputes)
            self._finish(self.payment.status, now)
        return nxt

    def _done(self, now: int) -> None:
        return None


def pay(ring: Ring, sender, receiver, amt: int, rng: random.Random,
        params: RoutingParams | None = None, **kw) -> TransactionOutcome:
    """Run one end-to-end transaction to completion on its own clock."""
    from .engine import EventLoop

    tx = Transaction(ring, sender, receiver, amt, rng, params, **kw)
    loop = EventLoop(ring.ledger, ring)
    loop.schedule(tx, ring.ledger.now)
    loop.run()
    return tx.outcome
