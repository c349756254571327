import random
import sys
from functools import lru_cache
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from raced.dht import RingConfig, Volunteer, dht_setup  # noqa: E402
from raced.identity import derive_seed, generate_identity  # noqa: E402
from raced.ledger import Ledger  # noqa: E402


@lru_cache(maxsize=None)
def ident(node):
    return generate_identity(derive_seed(1234, node), node_ref=node)


def make_ledger(edges):
    """Ledger from ``(u, v, lw_uv, lw_vu)`` rows."""
    ledger = Ledger()
    for u, v, a, b in edges:
        ledger.pc_open(ident(u), ident(v), a, b)
    return ledger


def make_ring(rh_nodes, ledger=None, **cfg):
    ledger = ledger or Ledger()
    vols = [Volunteer(ident(n), f"rh/{n}".encode()) for n in rh_nodes]
    return dht_setup(vols, RingConfig(**cfg), ledger, now=ledger.now)


def random_pcn(rng: random.Random, n: int, p: float, lo: int = 1, hi: int = 200):
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p:
                edges.append((u, v, rng.randint(lo, hi), rng.randint(lo, hi)))
    return edges


@pytest.fixture
def four_in_line():
    """Alice, Charlie, Denise, Bob in a line; Charlie and Denise are RHs."""
    edges = [("alice", "charlie", 200, 200), ("charlie", "denise", 200, 200),
             ("denise", "bob", 150, 100)]
    ledger = make_ledger(edges)
    return ledger
