"""Discrete-event driver shared by single payments and full simulations.

Actors expose ``step(now) -> int | None``: the tick at which they want to
run next, or ``None`` once finished.  The loop advances the ledger clock one
tick at a time so per-tick attestation refresh sees every epoch boundary.
Events at the same tick run in scheduling order, which is what makes runs
reproducible.
"""
from __future__ import annotations

import heapq
import itertools
from typing import Protocol

from .ledger import Ledger


class Actor(Protocol):
    def step(self, now: int) -> int | None: ...


class EventLoop:
    def __init__(self, ledger: Ledger, ring=None):
        self.ledger = ledger
        self.ring = ring
        self._heap: list[tuple[int, int, Actor]] = []
        self._seq = itertools.count()
        self._clock_seen = ledger.now - 1 if ring is not None else ledger.now

    def schedule(self, actor: Actor, tick: int) -> None:
        if tick < self.ledger.now:
            raise ValueError(f"cannot schedule at {tick}, clock is at {self.ledger.now}")
        heapq.heappush(self._heap, (tick, next(self._seq), actor))

    def _advance_to(self, tick: int) -> None:
        for t in range(self._clock_seen + 1, tick + 1):
            self.ledger.now = t
            if self.ring is not None:
                self.ring.refresh_attestations(t)
        self._clock_seen = max(self._clock_seen, tick)
        self.ledger.now = tick

    def run(self, until: int | None = None) -> int:
        """Process events up to ``until`` (or until the queue drains); returns the clock."""
        while self._heap:
            tick = self._heap[0][0]
            if until is not None and tick > until:
                break
            self._advance_to(tick)
            _, _, actor = heapq.heappop(self._heap)
            nxt = actor.step(tick)
            if nxt is not None:
                self.schedule(actor, max(nxt, tick))
        if until is not None and until > self._clock_seen:
            self._advance_to(until)
        return self.ledger.now

    def __len__(self) -> int:
        return len(self._heap)
