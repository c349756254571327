"""Simulated blockchain with payment channels and hashed time-lock contracts.

The :class:`Ledger` owns every channel in the PCN and an append-only list of
public records (channel opens/closes and disputes).  Protocol code never
touches balances directly; every balance change goes through
:meth:`Ledger.htlc_lock`, :meth:`Ledger.htlc_fulfill` and
:meth:`Ledger.htlc_refund`, so per-channel conservation holds by
construction.

Time is an integer tick counter (:attr:`Ledger.now`) advanced by whoever
drives the simulation.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Hashable, Iterable

from .encoding import canonical, decode, node_key
from .identity import Identity, raw_sign, verify_neighbor_identity

CHANNEL_OPEN = "channel_open"
CHANNEL_CLOSE = "channel_close"
DISPUTE = "dispute"

PENDING, FULFILLED, REFUNDED = "pending", "fulfilled", "refunded"
OPEN, CLOSED = "open", "closed"


class LedgerError(Exception):
    pass


class DepositError(LedgerError, ValueError):
    pass


class DuplicateChannelError(LedgerError):
    pass


class IdentityCheckError(LedgerError):
    pass


class ChannelStateError(LedgerError):
    pass


class CloseBlockedError(LedgerError):
    pass


class LiquidityError(LedgerError):
    pass


class HtlcStateError(LedgerError):
    """The HTLC already reached a terminal state."""


class HtlcExpiredError(LedgerError):
    pass


class RefundTooEarlyError(LedgerError):
    pass


class UnknownNodeError(LedgerError, LookupError):
    pass


def digest(preimage: bytes) -> bytes:
    return hashlib.sha256(preimage).digest()


@dataclass
class PaymentChannel:
    id: int
    a: Hashable
    b: Hashable
    lw_ab: int
    lw_ba: int
    locked_ab: int = 0
    locked_ba: int = 0
    state: str = OPEN
    capacity: int = 0
    pending: int = 0

    def peer(self, node) -> Hashable:
        if node == self.a:
            return self.b
        if node == self.b:
            return self.a
        raise UnknownNodeError(f"{node!r} is not an endpoint of channel {self.id}")

    def free(self, payer) -> int:
        """Spendable balance of ``payer`` toward the other endpoint."""
        if payer == self.a:
            return self.lw_ab
        if payer == self.b:
            return self.lw_ba
        raise UnknownNodeError(f"{payer!r} is not an endpoint of channel {self.id}")

    def side(self, node) -> int:
        """Funds owned by ``node`` in this channel, counting its own locks."""
        if node == self.a:
            return self.lw_ab + self.locked_ab
        if node == self.b:
            return self.lw_ba + self.locked_ba
        raise UnknownNodeError(f"{node!r} is not an endpoint of channel {self.id}")

    def total(self) -> int:
        return self.lw_ab + self.lw_ba + self.locked_ab + self.locked_ba

    def _shift(self, payer, free_delta: int, locked_delta: int) -> None:
        if payer == self.a:
            self.lw_ab += free_delta
            self.locked_ab += locked_delta
        else:
            self.lw_ba += free_delta
            self.locked_ba += locked_delta


@dataclass
class Htlc:
    id: int
    channel: int
    payer: Hashable
    payee: Hashable
    txid: bytes
    amount: int
    digest_Y: bytes
    timeout: int
    state: str = PENDING


@dataclass(frozen=True)
class LedgerRecord:
    seq: int
    kind: str
    payload: bytes

    def fields(self) -> list:
        return decode(self.payload)

    def line(self) -> str:
        return f"{self.seq},{self.kind},{self.payload.hex()}"


@dataclass
class Ledger:
    now: int = 0
    records: list[LedgerRecord] = field(default_factory=list)
    channels: dict[int, PaymentChannel] = field(default_factory=dict)
    htlcs: dict[int, Htlc] = field(default_factory=dict)
    identities: dict[Hashable, Identity] = field(default_factory=dict)
    _by_vk: dict[bytes, Hashable] = field(default_factory=dict)
    _pairs: dict[frozenset, int] = field(default_factory=dict)
    _adj: dict[Hashable, dict[Hashable, int]] = field(default_factory=dict)
    _overlay: dict[frozenset, int] = field(default_factory=dict)
    _incident: dict[Hashable, set[int]] = field(default_factory=dict)

    # -- identities and topology -------------------------------------------

    def register(self, identity: Identity) -> None:
        self.identities[identity.node_ref] = identity
        self._by_vk[identity.vk] = identity.node_ref
        self._adj.setdefault(identity.node_ref, {})

    def node_of(self, vk: bytes) -> Hashable:
        try:
            return self._by_vk[vk]
        except KeyError:
            raise UnknownNodeError(f"no node with vk {vk.hex()[:16]}..") from None

    def nodes(self) -> list:
        return sorted(self._adj, key=node_key)

    def neighbors(self, node) -> list:
        try:
            return sorted(self._adj[node], key=node_key)
        except KeyError:
            raise UnknownNodeError(f"unknown node {node!r}") from None

    def retrieve_neighbors(self, vk: bytes) -> list[bytes]:
        """Long-term keys of every node sharing an open channel with ``vk``'s owner."""
        node = self.node_of(vk)
        return [self.identities[n].vk for n in self.neighbors(node)]

    def channel_between(self, u, v) -> PaymentChannel | None:
        cid = self._pairs.get(frozenset((u, v)))
        return None if cid is None else self.channels[cid]

    def overlay_channel(self, u, v) -> PaymentChannel | None:
        cid = self._overlay.get(frozenset((u, v)))
        return None if cid is None else self.channels[cid]

    def free_balance(self, u, v) -> int:
        """``lw_{u,v}``: 0 when there is no open channel."""
        cid = self._adj.get(u, {}).get(v)
        return 0 if cid is None else self.channels[cid].free(u)

    def out_edges(self, node):
        """(neighbor, lw_{node,neighbor}) over open channels."""
        for nb, cid in self._adj.get(node, {}).items():
            yield nb, self.channels[cid].free(node)

    # -- channel lifecycle -------------------------------------------------

    def pc_open(self, a: Identity, b: Identity, lw_ab: int, lw_ba: int, *,
                overlay: bool = False) -> PaymentChannel:
        """Open a channel funded with ``lw_ab`` by ``a`` and ``lw_ba`` by ``b``.

        Both pseudonyms are checked against their long-term keys and the
        opening tuple is signed by both temporary keys (a 2-of-2 funding
        transaction) before it is written to the chain.

        ``overlay`` channels back the RH ring.  They may run parallel to an
        ordinary channel between the same pair and are left out of the
        PCN adjacency that path searches walk.
        """
        if lw_ab < 0 or lw_ba < 0:
            raise DepositError(f"negative deposit ({lw_ab}, {lw_ba})")
        if a.node_ref == b.node_ref:
            raise DepositError("cannot open a channel to oneself")
        pair = frozenset((a.node_ref, b.node_ref))
        if pair in (self._overlay if overlay else self._pairs):
            raise DuplicateChannelError(f"channel already open between {a.node_ref!r} and {b.node_ref!r}")
        for ident in (a, b):
            if not verify_neighbor_identity(ident.vk, ident.VK, ident.sigma_VK):
                raise IdentityCheckError(f"pseudonym of {ident.node_ref!r} does not verify")
        self.register(a)
        self.register(b)
        cid = len(self.channels)
        body = canonical(cid, a.VK, b.VK, lw_ab, lw_ba)
        self._append(CHANNEL_OPEN, canonical(cid, a.VK, b.VK, lw_ab, lw_ba,
                                             raw_sign(a.SK, body), raw_sign(b.SK, body)))
        ch = PaymentChannel(cid, a.node_ref, b.node_ref, lw_ab, lw_ba, capacity=lw_ab + lw_ba)
        self.channels[cid] = ch
        if overlay:
            self._overlay[pair] = cid
        else:
            self._pairs[pair] = cid
            self._adj[a.node_ref][b.node_ref] = cid
            self._adj[b.node_ref][a.node_ref] = cid
        self._incident.setdefault(a.node_ref, set()).add(cid)
        self._incident.setdefault(b.node_ref, set()).add(cid)
        return ch

    def pc_close(self, channel_id: int) -> LedgerRecord:
        ch = self._open_channel(channel_id)
        if ch.pending:
            raise CloseBlockedError(f"channel {channel_id} has {ch.pending} pending HTLC(s)")
        ch.state = CLOSED
        pair = frozenset((ch.a, ch.b))
        if self._overlay.get(pair) == ch.id:
            del self._overlay[pair]
        else:
            del self._pairs[pair]
            del self._adj[ch.a][ch.b]
            del self._adj[ch.b][ch.a]
        self._incident[ch.a].discard(ch.id)
        self._incident[ch.b].discard(ch.id)
        ident_a, ident_b = self.identities[ch.a], self.identities[ch.b]
        seq = self._append(CHANNEL_CLOSE, canonical(ch.id, ident_a.VK, ident_b.VK, ch.lw_ab, ch.lw_ba))
        return self.records[seq]

    def _open_channel(self, channel_id: int) -> PaymentChannel:
        ch = self.channels.get(channel_id)
        if ch is None:
            raise ChannelStateError(f"no channel {channel_id}")
        if ch.state != OPEN:
            raise ChannelStateError(f"channel {channel_id} is closed")
        return ch

    # -- HTLCs -------------------------------------------------------------

    def htlc_lock(self, channel_id: int, payer, amount: int, digest_Y: bytes,
                  timeout: int, txid: bytes) -> Htlc:
        ch = self._open_channel(channel_id)
        if amount <= 0:
            raise LedgerError(f"HTLC amount must be positive, got {amount}")
        if timeout <= self.now:
            raise LedgerError(f"timeout {timeout} is not after now={self.now}")
        free = ch.free(payer)
        if free < amount:
            raise LiquidityError(
                f"{payer!r} has {free} free on channel {channel_id}, needs {amount}")
        ch._shift(payer, -amount, amount)
        ch.pending += 1
        h = Htlc(len(self.htlcs), channel_id, payer, ch.peer(payer), txid, amount, digest_Y, timeout)
        self.htlcs[h.id] = h
        return h

    def _pending(self, htlc_id: int) -> tuple[Htlc, PaymentChannel]:
        h = self.htlcs[htlc_id]
        if h.state != PENDING:
            raise HtlcStateError(f"HTLC {htlc_id} already {h.state}")
        return h, self.channels[h.channel]

    def htlc_fulfill(self, htlc_id: int, preimage: bytes) -> bool:
        """Settle with ``preimage``; False (and no balance change) if it is wrong."""
        h, ch = self._pending(htlc_id)
        if self.now >= h.timeout:
            raise HtlcExpiredError(f"HTLC {htlc_id} expired at {h.timeout}, now={self.now}")
        if digest(preimage) != h.digest_Y:
            return False
        ch._shift(h.payer, 0, -h.amount)
        ch._shift(h.payee, h.amount, 0)
        ch.pending -= 1
        h.state = FULFILLED
        return True

    def htlc_refund(self, htlc_id: int) -> bool:
        h, ch = self._pending(htlc_id)
        if self.now < h.timeout:
            raise RefundTooEarlyError(f"HTLC {htlc_id} refundable at {h.timeout}, now={self.now}")
        ch._shift(h.payer, h.amount, -h.amount)
        ch.pending -= 1
        h.state = REFUNDED
        return True

    def pending_htlcs(self, node=None) -> list[Htlc]:
        return [h for h in self.htlcs.values() if h.state == PENDING
                and (node is None or node in (h.payer, h.payee))]

    # -- records -----------------------------------------------------------

    def _append(self, kind: str, payload: bytes) -> int:
        seq = len(self.records)
        self.records.append(LedgerRecord(seq, kind, payload))
        return seq

    def bc_write(self, *fields) -> int:
        """Append a public dispute record; returns its sequence number."""
        return self._append(DISPUTE, canonical(*fields))

    def records_of(self, kind: str) -> list[LedgerRecord]:
        return [r for r in self.records if r.kind == kind]

    def transcript(self) -> str:
        return "".join(r.line() + "\n" for r in self.records)

    def prefix_hash(self, k: int) -> str:
        """Hash over records ``0..k-1``; stable once record ``k`` exists."""
        h = hashlib.sha256()
        for r in self.records[:k]:
            h.update(r.line().encode() + b"\n")
        return h.hexdigest()

    def export(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.transcript())

    # -- inspection --------------------------------------------------------

    def balance_vector(self, channel_ids: Iterable[int] | None = None) -> tuple:
        ids = sorted(self.channels) if channel_ids is None else channel_ids
        return tuple((c.id, c.lw_ab, c.lw_ba, c.locked_ab, c.locked_ba)
                     for c in (self.channels[i] for i in ids))

    def wealth(self, node) -> int:
        """Sum of ``node``'s sides over its open channels, overlay ones included."""
        return sum(self.channels[cid].side(node) for cid in self._incident.get(node, ()))

    def total_funds(self) -> int:
        return sum(c.total() for c in self.channels.values() if c.state == OPEN)

    def conservation_violations(self) -> list[int]:
        return [c.id for c in self.channels.values() if c.total() != c.capacity
                or min(c.lw_ab, c.lw_ba, c.locked_ab, c.locked_ba) < 0]
