"""Channel-graph ingestion, synthetic topologies and RH selection."""
from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field

import networkx as nx


class GraphError(ValueError):
    pass


class ParseError(GraphError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class DuplicateEdgeError(GraphError):
    pass


class ConfigError(GraphError):
    pass


@dataclass
class NetworkSpec:
    """Undirected channels with one free balance per direction.

    ``edges`` rows are ``(src, dst, lw_src_to_dst, lw_dst_to_src)``.
    """

    nodes: list[int]
    edges: list[tuple[int, int, int, int]]
    source: dict = field(default_factory=dict)
    dropped: int = 0

    def __post_init__(self):
        seen = set()
        for src, dst, a, b in self.edges:
            if src == dst:
                raise GraphError(f"self-loop on {src}")
            if a < 0 or b < 0:
                raise GraphError(f"negative balance on {src}-{dst}")
            pair = frozenset((src, dst))
            if pair in seen:
                raise DuplicateEdgeError(f"more than one channel between {src} and {dst}")
            seen.add(pair)

    def digraph(self) -> nx.DiGraph:
        """Directed graph with an arc wherever the payer has positive balance."""
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        for src, dst, a, b in self.edges:
            if a > 0:
                g.add_edge(src, dst, lw=a)
            if b > 0:
                g.add_edge(dst, src, lw=b)
        return g


def load_graph(path) -> NetworkSpec:
    """Read ``src,dst,lw_src_to_dst,lw_dst_to_src`` rows.

    Rows carrying a zero or negative balance are dropped and counted.  A
    header row is allowed if its first field is not an integer.
    """
    edges = []
    nodes = set()
    seen: dict[frozenset, int] = {}
    dropped = 0
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            if len(row) != 4:
                if lineno == 1 and not row[0].strip().lstrip("-").isdigit():
                    continue
                raise ParseError(lineno, f"expected 4 fields, got {len(row)}")
            try:
                src, dst, a, b = (int(x) for x in row)
            except ValueError:
                if lineno == 1:
                    continue
                raise ParseError(lineno, f"non-integer field in {row!r}") from None
            if src == dst:
                raise ParseError(lineno, f"self-loop on {src}")
            pair = frozenset((src, dst))
            if pair in seen:
                raise DuplicateEdgeError(f"line {lineno}: channel {src}-{dst} already on line {seen[pair]}")
            seen[pair] = lineno
            if a <= 0 or b <= 0:
                dropped += 1
                continue
            edges.append((src, dst, a, b))
            nodes.update((src, dst))
    return NetworkSpec(sorted(nodes), edges, {"kind": "csv", "path": str(path)}, dropped)


def write_graph(spec: NetworkSpec, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        for row in spec.edges:
            w.writerow(row)


def generate_synthetic(n: int = 2000, seed: int = 42, *, attach: int = 2, components: int = 1,
                       min_balance: int = 200, max_balance: int = 2000,
                       hub_scale: float = 0.25) -> NetworkSpec:
    """Seeded Barabasi-Albert channel graph, optionally split into disjoint parts.

    Each direction of a channel gets a uniform balance in
    ``[min_balance, max_balance]`` multiplied by
    ``1 + hub_scale * min(deg_u, deg_v)``, so channels between well-connected
    nodes are larger.  With ``components > 1`` the nodes are split into that
    many equal-sized independent graphs.
    """
    if n < 2:
        raise ConfigError(f"need at least 2 nodes, got {n}")
    if components < 1 or n // components < 2:
        raise ConfigError(f"cannot split {n} nodes into {components} components")
    if attach < 1:
        raise ConfigError(f"attach must be >= 1, got {attach}")
    if not 0 < min_balance <= max_balance:
        raise ConfigError(f"bad balance range [{min_balance}, {max_balance}]")
    rng = random.Random(seed)
    g = nx.Graph()
    sizes = [n // components + (1 if c < n % components else 0) for c in range(components)]
    offset = 0
    for size in sizes:
        if size <= attach:
            part = nx.path_graph(size)
        else:
            part = nx.barabasi_albert_graph(size, attach, seed=rng.randrange(2**31))
        g.add_nodes_from(range(offset, offset + size))
        g.add_edges_from((u + offset, v + offset) for u, v in part.edges())
        offset += size
    edges = []
    for u, v in sorted((min(e), max(e)) for e in g.edges()):
        scale = 1 + hub_scale * min(g.degree(u), g.degree(v))
        a = int(rng.randint(min_balance, max_balance) * scale)
        b = int(rng.randint(min_balance, max_balance) * scale)
        edges.append((u, v, a, b))
    source = {"kind": "synthetic", "n": n, "seed": seed, "attach": attach, "components": components}
    return NetworkSpec(list(range(n)), edges, source)


def parse_synthetic(arg: str) -> dict:
    """``"n=2000,seed=42"`` -> keyword arguments for :func:`generate_synthetic`."""
    out = {}
    for part in filter(None, (p.strip() for p in arg.split(","))):
        key, sep, val = part.partition("=")
        if not sep:
            raise ConfigError(f"expected key=value, got {part!r}")
        key = key.strip()
        out[key] = float(val) if key == "hub_scale" else int(val)
    return out


def strongly_connected(spec: NetworkSpec) -> list[set]:
    """SCCs ordered by size (descending), then smallest member."""
    comps = [set(c) for c in nx.strongly_connected_components(spec.digraph())]
    return sorted(comps, key=lambda c: (-len(c), min(c)))


def select_rhs(spec: NetworkSpec, rh_count: int, mode: str = "one_scc") -> list[int]:
    """Pick routing helpers by out-degree.

    ``one_scc``: the ``rh_count`` highest out-degree nodes of the largest
    SCC.  ``k_scc``: the highest out-degree node of each of the
    ``rh_count`` largest SCCs.  Ties go to the lower node id.
    """
    if rh_count < 2:
        raise ConfigError(f"rh_count must be >= 2, got {rh_count}")
    g = spec.digraph()
    comps = strongly_connected(spec)
    rank = lambda v: (-g.out_degree(v), v)
    if mode == "one_scc":
        big = comps[0]
        if len(big) < rh_count:
            raise ConfigError(f"largest SCC has {len(big)} nodes, need {rh_count}")
        return sorted(big, key=rank)[:rh_count]
    if mode == "k_scc":
        if len(comps) < rh_count:
            raise ConfigError(f"graph has {len(comps)} SCCs, need {rh_count}")
        return [min(c, key=rank) for c in comps[:rh_count]]
    raise ConfigError(f"unknown mode {mode!r}")
