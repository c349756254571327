"""Chord overlay of routing helpers (RHs).

Identifiers live in ``[0, 2**m)``.  Finger ``j`` (1-based) of node ``i``
resolves to the live successor of ``(i + 2**(j-1)) mod 2**m``.  Every RH
opens a payment channel to each distinct finger entry and publishes a
dual-signed :class:`MaxAmountRecord` advertising a rounded-down cap on what
it will forward over that channel.

The pure functions at the top work on plain id lists and are what the
:class:`Ring` uses internally; tests exercise them against brute force.
"""
from __future__ import annotations

import bisect
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

from .encoding import canonical
from .identity import Identity, raw_sign, raw_verify
from .ledger import Ledger, LedgerError

log = logging.getLogger(__name__)


class DhtError(Exception):
    pass


class RingEmptyError(DhtError):
    pass


class OverlayDegenerateError(DhtError):
    pass


class CollisionError(DhtError):
    pass


class JoinError(DhtError):
    pass


class LeaveDeferredError(DhtError):
    pass


class UnknownHelperError(DhtError, LookupError):
    pass


@dataclass(frozen=True)
class RingConfig:
    m_bits: int = 32
    delta: int = 100
    hash_name: str = "sha256"
    max_bucket: int = 10
    deposit: int = 100_000

    def __post_init__(self):
        if self.m_bits < 3:
            raise ValueError(f"m_bits must be >= 3, got {self.m_bits}")
        if self.delta < 1:
            raise ValueError(f"delta must be >= 1, got {self.delta}")
        if self.max_bucket < 1:
            raise ValueError(f"max_bucket must be >= 1, got {self.max_bucket}")
        hashlib.new(self.hash_name)

    @property
    def space(self) -> int:
        return 1 << self.m_bits


# -- identifier arithmetic ----------------------------------------------------

def node_id_from_address(address: bytes, cfg: RingConfig) -> int:
    if not address:
        raise ValueError("address must be non-empty")
    h = hashlib.new(cfg.hash_name, bytes(address)).digest()
    return int.from_bytes(h, "big") % cfg.space


def finger_targets(node_id: int, m_bits: int) -> list[int]:
    space = 1 << m_bits
    return [(node_id + (1 << (j - 1))) % space for j in range(1, m_bits + 1)]


def succ_lookup(ident: int, members: Sequence[int], inclusive: bool = False) -> int:
    """Smallest member greater than ``ident`` (``>=`` when ``inclusive``), wrapping.

    ``members`` must be sorted ascending.
    """
    if not members:
        raise RingEmptyError("ring has no members")
    pos = (bisect.bisect_left if inclusive else bisect.bisect_right)(members, ident)
    return members[pos % len(members)]


def resolve_fingers(node_id: int, members: Sequence[int], m_bits: int) -> list[int]:
    return [succ_lookup(t, members, inclusive=True) for t in finger_targets(node_id, m_bits)]


def remove_duplicates(stack: Iterable[int]) -> list[int]:
    seen = set()
    out = []
    for x in stack:
        if x not in seen:
            seen.add(x)
            out.append(x)
    return out


def ft_lookup_entries(i: int, entries: Sequence[int], j: int, m_bits: int) -> int:
    """Entry with the largest id not past ``j`` going clockwise from ``i``.

    When every entry lies beyond ``j`` the first entry (``i``'s immediate
    successor) is returned.
    """
    if not entries:
        raise OverlayDegenerateError(f"node {i} has an empty finger table")
    space = 1 << m_bits
    limit = (j - i) % space
    best, best_d = None, -1
    for f in entries:
        d = (f - i) % space
        if best_d < d <= limit:
            best, best_d = f, d
    return entries[0] if best is None else best


# -- attestations ---------------------------------------------------------------

def attestation_message(i: int, k: int, max_ik: int, tc: int, tv: int) -> bytes:
    return canonical("max-amount", i, k, max_ik, tc, tv)


@dataclass(frozen=True)
class MaxAmountRecord:
    i: int
    k: int
    max_ik: int
    sigma_i: bytes
    sigma_k: bytes
    tc: int
    tv: int

    def message(self) -> bytes:
        return attestation_message(self.i, self.k, self.max_ik, self.tc, self.tv)

    def verify(self, vk_i: bytes, vk_k: bytes) -> bool:
        msg = self.message()
        return raw_verify(vk_i, msg, self.sigma_i) and raw_verify(vk_k, msg, self.sigma_k)


@dataclass
class RoutingHelper:
    node_id: int
    identity: Identity
    address: bytes
    funds: int | None = None
    finger_raw: list[int] = field(default_factory=list)
    finger_unique: list[int] = field(default_factory=list)
    attest: dict[int, MaxAmountRecord] = field(default_factory=dict)

    @property
    def node(self) -> Hashable:
        return self.identity.node_ref


@dataclass(frozen=True)
class Volunteer:
    identity: Identity
    address: bytes
    funds: int | None = None


class Ring:
    """Live RH membership, finger tables, backing channels and attestation lists."""

    def __init__(self, ledger: Ledger, cfg: RingConfig):
        self.ledger = ledger
        self.cfg = cfg
        self.helpers: dict[int, RoutingHelper] = {}
        self.members: list[int] = []
        self.directory: dict[int, bytes] = {}
        self.owned_channels: set[int] = set()
        self.refuses_cosign: set[int] = set()
        self.rejected: list[tuple[bytes, str]] = []
        self._by_node: dict[Hashable, int] = {}
        self._stale = False

    # -- queries -------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, node_id: int) -> bool:
        return node_id in self.helpers

    def helper(self, node_id: int) -> RoutingHelper:
        try:
            return self.helpers[node_id]
        except KeyError:
            raise UnknownHelperError(f"{node_id} is not a live RH") from None

    def id_of_node(self, node) -> int | None:
        return self._by_node.get(node)

    def rh_nodes(self) -> list:
        return [self.helpers[i].node for i in self.members]

    def succ(self, ident: int) -> int:
        return succ_lookup(ident, self.members)

    def ft_retrieve(self, i: int) -> list[int]:
        return list(self.helper(i).finger_raw)

    def ft_search(self, i: int, j: int) -> bool:
        return j in self.helper(i).finger_raw

    def ft_lookup(self, i: int, j: int) -> int:
        return ft_lookup_entries(i, self.helper(i).finger_unique, j, self.cfg.m_bits)

    def lookup_path(self, a: int, b: int) -> list[int]:
        """Greedy finger walk from ``a`` to ``b`` (ids, both ends included)."""
        path = [a]
        cur = a
        for _ in range(self.cfg.m_bits):
            if cur == b:
                return path
            cur = self.ft_lookup(cur, b)
            path.append(cur)
        if cur != b:
            raise OverlayDegenerateError(f"walk {a}->{b} did not converge in {self.cfg.m_bits} steps")
        return path

    def attestation(self, i: int, k: int) -> MaxAmountRecord | None:
        h = self.helpers.get(i)
        return None if h is None else h.attest.get(k)

    def max_policy(self, lw: int) -> int:
        b = self.cfg.max_bucket
        return (max(lw, 0) // b) * b

    def oracle_diff(self) -> list[str]:
        """Finger entries that disagree with a linear-scan successor."""
        space = self.cfg.space
        out = []
        for i in self.members:
            for j, (t, got) in enumerate(zip(finger_targets(i, self.cfg.m_bits),
                                             self.helpers[i].finger_raw), start=1):
                want = min(self.members, key=lambda x: (x - t) % space)
                if got != want:
                    out.append(f"{i} finger[{j}] target={t}: have {got}, expected {want}")
        return out

    def dump_lines(self) -> list[str]:
        return [f"{i},{self.helpers[i].address.decode(errors='backslashreplace')},"
                f"{';'.join(map(str, self.helpers[i].finger_raw))}" for i in self.members]

    # -- construction ----------------------------------------------------------

    def _recompute_fingers(self, i: int) -> None:
        h = self.helpers[i]
        h.finger_raw = resolve_fingers(i, self.members, self.cfg.m_bits)
        h.finger_unique = [f for f in remove_duplicates(h.finger_raw) if f != i]

    def _insert(self, h: RoutingHelper) -> None:
        self.helpers[h.node_id] = h
        bisect.insort(self.members, h.node_id)
        self.directory[h.node_id] = h.identity.vk
        self._by_node[h.node] = h.node_id

    def _remove(self, node_id: int) -> RoutingHelper:
        h = self.helpers.pop(node_id)
        self.members.remove(node_id)
        del self.directory[node_id]
        del self._by_node[h.node]
        return h

    def backing(self, i: int, k: int):
        """The ring channel between two RHs, or None."""
        return self.ledger.overlay_channel(self.helpers[i].node, self.helpers[k].node)

    def lw(self, i: int, k: int) -> int:
        ch = self.backing(i, k)
        return 0 if ch is None else ch.free(self.helpers[i].node)

    def _ensure_channel(self, i: int, k: int) -> bool:
        """Make sure an open ring channel backs the RH pair; funds it if new."""
        hi, hk = self.helpers[i], self.helpers[k]
        if self.backing(i, k) is not None:
            return True
        d = self.cfg.deposit
        for h in (hi, hk):
            if h.funds is not None and h.funds < d:
                return False
        try:
            ch = self.ledger.pc_open(hi.identity, hk.identity, d, d, overlay=True)
        except LedgerError as exc:
            log.warning("channel %s<->%s failed: %s", i, k, exc)
            return False
        for h in (hi, hk):
            if h.funds is not None:
                h.funds -= d
        self.owned_channels.add(ch.id)
        return True

    def _attest(self, i: int, k: int, now: int, max_ik: int | None = None,
                tc: int | None = None, tv: int | None = None) -> MaxAmountRecord | None:
        hi, hk = self.helpers[i], self.helpers[k]
        if max_ik is None:
            max_ik = self.max_policy(self.lw(i, k))
        tc = now if tc is None else tc
        tv = tc + self.cfg.delta if tv is None else tv
        if k in self.refuses_cosign or i in self.refuses_cosign:
            hi.attest.pop(k, None)
            return None
        msg = attestation_message(i, k, max_ik, tc, tv)
        rec = MaxAmountRecord(i, k, max_ik, raw_sign(hi.identity.sk, msg),
                              raw_sign(hk.identity.sk, msg), tc, tv)
        hi.attest[k] = rec
        return rec

    def _funding_needed(self, members: set[int], fingers: dict[int, list[int]]) -> dict[int, int]:
        need = {i: 0 for i in members}
        pairs = set()
        for i in members:
            for k in fingers[i]:
                pairs.add(frozenset((i, k)))
        for pair in pairs:
            i, k = tuple(pair)
            if self.backing(i, k) is None:
                need[i] += self.cfg.deposit
                need[k] += self.cfg.deposit
        return need

    # -- protocols -------------------------------------------------------------

    def setup(self, volunteers: Iterable[Volunteer], now: int = 0) -> None:
        candidates: dict[int, RoutingHelper] = {}
        for v in volunteers:
            nid = node_id_from_address(v.address, self.cfg)
            if nid in candidates or nid in self.helpers:
                self.rejected.append((v.address, "id collision"))
                continue
            candidates[nid] = RoutingHelper(nid, v.identity, bytes(v.address), v.funds)
        for h in candidates.values():
            self._insert(h)
        # drop volunteers who cannot fund their channels until membership is stable
        while True:
            for i in self.members:
                self._recompute_fingers(i)
            fingers = {i: self.helpers[i].finger_unique for i in self.members}
            need = self._funding_needed(set(self.members), fingers)
            broke = [i for i in self.members
                     if self.helpers[i].funds is not None and self.helpers[i].funds < need[i]]
            if not broke:
                break
            for i in broke:
                h = self._remove(i)
                self.rejected.append((h.address, "insufficient funds"))
        for i in self.members:
            for k in self.helpers[i].finger_unique:
                if self._ensure_channel(i, k):
                    self._attest(i, k, now)
        self._stale = False

    def refresh_attestations(self, now: int) -> list[MaxAmountRecord]:
        """Re-sign depleted caps now; at epoch boundaries extend or replace all.

        A cap above the current balance is replaced immediately.  At each
        boundary (``now % delta == 0``) churn repairs run first, then every
        record is either extended by ``delta`` (cap unchanged) or replaced.
        Extension re-signs because the validity tick is covered by both
        signatures.
        """
        boundary = now % self.cfg.delta == 0
        if boundary and self._stale:
            self.maintain(now)
        updated = []
        for i in self.members:
            hi = self.helpers[i]
            for k in hi.finger_unique:
                rec = hi.attest.get(k)
                hk = self.helpers.get(k)
                if hk is None:
                    continue
                lw = self.lw(i, k)
                if rec is None:
                    if boundary and self.backing(i, k) is not None:
                        new = self._attest(i, k, now)
                        if new is not None:
                            updated.append(new)
                    continue
                if rec.max_ik > lw:
                    new = self._attest(i, k, now)
                elif boundary and rec.tc < now:
                    fresh = self.max_policy(lw)
                    if fresh == rec.max_ik:
                        new = self._attest(i, k, now, rec.max_ik, rec.tc, rec.tv + self.cfg.delta)
                    else:
                        new = self._attest(i, k, now)
                else:
                    continue
                if new is not None:
                    updated.append(new)
        return updated

    def maintain(self, now: int) -> None:
        """Epoch-boundary repair after churn: recompute fingers, back new entries."""
        for i in self.members:
            hi = self.helpers[i]
            old = set(hi.finger_unique)
            self._recompute_fingers(i)
            for k in list(hi.attest):
                if k not in hi.finger_unique:
                    del hi.attest[k]
            for k in hi.finger_unique:
                if k not in old or k not in hi.attest:
                    if self._ensure_channel(i, k):
                        self._attest(i, k, now)
        self._stale = False

    def node_join(self, volunteer: Volunteer, now: int) -> int:
        nid = node_id_from_address(volunteer.address, self.cfg)
        if volunteer.identity.node_ref in self._by_node:
            raise JoinError(f"{volunteer.identity.node_ref!r} is already a RH")
        if nid in self.helpers:
            raise CollisionError(f"id {nid} already taken")
        h = RoutingHelper(nid, volunteer.identity, bytes(volunteer.address), volunteer.funds)
        self._insert(h)
        self._recompute_fingers(nid)
        opened = set(self.owned_channels)
        for k in h.finger_unique:
            if not self._ensure_channel(nid, k):
                for cid in sorted(self.owned_channels - opened):
                    self.ledger.pc_close(cid)
                    self.owned_channels.discard(cid)
                self._remove(nid)
                raise JoinError(f"could not open channel {nid}<->{k}; join rolled back")
        for k in h.finger_unique:
            self._attest(nid, k, now)
        self._stale = True
        return nid

    def node_leave(self, node_id: int, now: int) -> None:
        h = self.helper(node_id)
        if self.ledger.pending_htlcs(h.node):
            raise LeaveDeferredError(f"RH {node_id} still has pending HTLCs")
        for cid in sorted(self.owned_channels):
            ch = self.ledger.channels[cid]
            if h.node in (ch.a, ch.b) and ch.state == "open":
                self.ledger.pc_close(cid)
                self.owned_channels.discard(cid)
        self._remove(node_id)
        for other in self.helpers.values():
            other.attest.pop(node_id, None)
        self._stale = True


def dht_setup(volunteers: Iterable[Volunteer], cfg: RingConfig, ledger: Ledger,
              now: int = 0) -> Ring:
    vols = list(volunteers)
    if len(vols) < 2:
        raise DhtError("need at least two volunteers")
    ring = Ring(ledger, cfg)
    ring.setup(vols, now)
    return ring
