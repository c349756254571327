"""Brute-force references the library is checked against.

Nothing here imports library internals beyond plain data access; each
function recomputes its answer the slow, obvious way.
"""
from __future__ import annotations

import hashlib


def linear_successor(members, ident, space, inclusive=False):
    """Member at the smallest clockwise distance past ``ident``."""
    best, best_d = None, None
    for x in members:
        d = (x - ident) % space
        if d == 0 and not inclusive:
            d = space
        if best_d is None or d < best_d:
            best, best_d = x, d
    return best


def brute_fingers(node_id, members, m_bits):
    space = 2 ** m_bits
    return [linear_successor(members, (node_id + 2 ** (j - 1)) % space, space, inclusive=True)
            for j in range(1, m_bits + 1)]


def reference_next_hop(i, entries, target, m_bits):
    """Closest entry that does not overshoot ``target``; the nearest entry otherwise."""
    space = 2 ** m_bits
    limit = (target - i) % space
    ok = [e for e in entries if 0 < (e - i) % space <= limit]
    if ok:
        return max(ok, key=lambda e: (e - i) % space)
    return min(entries, key=lambda e: (e - i) % space)


def reference_walk(start, target, tables, m_bits):
    """Greedy walk over ``tables`` (id -> distinct entries); None if no arrival in m steps."""
    path = [start]
    cur = start
    for _ in range(m_bits):
        if cur == target:
            return path
        cur = reference_next_hop(cur, tables[cur], target, m_bits)
        path.append(cur)
    return path if cur == target else None


def _paths_of_length(lw, adj, start, ends, L, need):
    """Simple paths of exactly ``L`` edges from ``start`` stopping at ``ends``.

    Edge ``h`` must have ``lw >= need(h)``; prefixes violating that are cut.
    """
    stack = [[start]]
    while stack:
        path = stack.pop()
        h = len(path) - 1
        if h == L:
            if path[-1] in ends:
                yield path
            continue
        if h and path[-1] in ends:
            continue
        for nb in adj.get(path[-1], ()):
            if nb not in path and lw[(path[-1], nb)] >= need(h):
                stack.append(path + [nb])


def best_leg(lw, start_nodes, end_nodes, amt, fee, downstream):
    """Enumerate simple paths from a start to an end node and rank them.

    ``lw[(u, v)]`` is the spendable balance from u to v.  Edge ``h`` of a
    path with ``L`` edges must carry ``amt + fee * (L - 1 - h + downstream)``.
    Ranking: fewest edges, then largest bottleneck, then smallest node
    sequence.  Lengths are tried in increasing order.  Returns None when
    nothing is feasible.
    """
    adj = {}
    for (u, v) in lw:
        adj.setdefault(u, []).append(v)
    ends = set(end_nodes)
    for s in start_nodes:
        if s in ends:
            return [s]
    n_nodes = len({x for e in lw for x in e})
    for L in range(1, n_nodes):
        need = lambda h, L=L: amt + fee * (L - 1 - h + downstream)
        # cheap walk check first; a shortest feasible walk is always a simple path
        frontier = set(start_nodes)
        for h in range(L):
            frontier = {v for u in frontier if h == 0 or u not in ends
                        for v in adj.get(u, ()) if lw[(u, v)] >= need(h)}
        if not frontier & ends:
            continue
        best_key = None
        for s in start_nodes:
            for path in _paths_of_length(lw, adj, s, ends, L, need):
                key = (-min(lw[(path[h], path[h + 1])] for h in range(L)), path)
                if best_key is None or key < best_key:
                    best_key = key
        if best_key is not None:
            return best_key[1]
    return None


def kosaraju(nodes, arcs):
    """Textbook two-pass SCC, returned as a set of frozensets."""
    fwd, rev = {v: [] for v in nodes}, {v: [] for v in nodes}
    for u, v in arcs:
        fwd[u].append(v)
        rev[v].append(u)
    order, seen = [], set()
    for root in nodes:
        if root in seen:
            continue
        seen.add(root)
        stack = [(root, iter(fwd[root]))]
        while stack:
            node, it = stack[-1]
            for nb in it:
                if nb not in seen:
                    seen.add(nb)
                    stack.append((nb, iter(fwd[nb])))
                    break
            else:
                stack.pop()
                order.append(node)
    comps, assigned = set(), set()
    for root in reversed(order):
        if root in assigned:
            continue
        comp, todo = set(), [root]
        assigned.add(root)
        while todo:
            x = todo.pop()
            comp.add(x)
            for nb in rev[x]:
                if nb not in assigned:
                    assigned.add(nb)
                    todo.append(nb)
        comps.add(frozenset(comp))
    return comps


def sha256_id(address: bytes, m_bits: int) -> int:
    return int(hashlib.sha256(address).hexdigest(), 16) % (2 ** m_bits)
