"""Aggregate metrics and their on-disk formats (JSON or ``key=value`` lines)."""
from __future__ import annotations

import json
import statistics
from dataclasses import asdict, dataclass, field, fields

from ..routing import STATUSES, SUCCESS, TransactionOutcome

FORMATS = ("json", "kv")


@dataclass
class MetricsReport:
    attempted: int = 0
    successes: int = 0
    success_ratio: float = 0.0
    mean_path_len: float = 0.0
    stdev_path_len: float = 0.0
    mean_ring_hops: float = 0.0
    max_ring_hops: int = 0
    mean_pathfind_ticks: float = 0.0
    stdev_pathfind_ticks: float = 0.0
    mean_route_ticks: float = 0.0
    stdev_route_ticks: float = 0.0
    failed_no_path: int = 0
    failed_validation: int = 0
    failed_liquidity: int = 0
    failed_timeout: int = 0
    disputes: int = 0
    wall: dict[str, float] = field(default_factory=dict)

    def failure_counts(self) -> dict[str, int]:
        return {
            "no_path": self.failed_no_path,
            "validation_failed": self.failed_validation,
            "liquidity_failed": self.failed_liquidity,
            "timeout": self.failed_timeout,
        }

    def to_flat(self) -> dict:
        d = asdict(self)
        wall = d.pop("wall")
        for k in sorted(wall):
            d[f"wall_{k}"] = wall[k]
        return d

    @classmethod
    def from_flat(cls, d: dict) -> "MetricsReport":
        names = {f.name: f.type for f in fields(cls)}
        kw, wall = {}, {}
        for k, v in d.items():
            if k.startswith("wall_"):
                wall[k[5:]] = float(v)
            elif k in names:
                kw[k] = int(v) if names[k] == "int" else float(v)
            else:
                raise ValueError(f"unknown report key {k!r}")
        return cls(**kw, wall=wall)


def _mean_sd(xs: list[float]) -> tuple[float, float]:
    if not xs:
        return 0.0, 0.0
    return round(statistics.fmean(xs), 6), round(statistics.pstdev(xs), 6)


_FAILURE_FIELD = {
    "no_path": "failed_no_path",
    "validation_failed": "failed_validation",
    "liquidity_failed": "failed_liquidity",
    "timeout": "failed_timeout",
}


def summarize(outcomes: list[TransactionOutcome], with_wall: bool = False) -> MetricsReport:
    """Path and timing means cover successful transactions only."""
    ok = [o for o in outcomes if o.status == SUCCESS]
    r = MetricsReport(attempted=len(outcomes), successes=len(ok))
    r.success_ratio = round(len(ok) / len(outcomes), 6) if outcomes else 0.0
    r.mean_path_len, r.stdev_path_len = _mean_sd([o.path_len for o in ok])
    r.mean_ring_hops, _ = _mean_sd([o.ring_hops for o in ok])
    r.max_ring_hops = max((o.ring_hops for o in ok), default=0)
    r.mean_pathfind_ticks, r.stdev_pathfind_ticks = _mean_sd([o.t_pathfind for o in ok])
    r.mean_route_ticks, r.stdev_route_ticks = _mean_sd([o.t_route for o in ok])
    for o in outcomes:
        if o.status not in STATUSES:
            raise ValueError(f"unknown status {o.status!r}")
        if o.status != SUCCESS:
            name = _FAILURE_FIELD[o.status]
            setattr(r, name, getattr(r, name) + 1)
    r.disputes = sum(len(o.disputes) for o in outcomes)
    if with_wall:
        pf = [o.wall_pathfind for o in ok]
        rt = [o.wall_route for o in ok]
        r.wall = {
            "mean_pathfind_s": statistics.fmean(pf) if pf else 0.0,
            "mean_route_s": statistics.fmean(rt) if rt else 0.0,
        }
    return r


def render(report: MetricsReport, fmt: str = "json") -> str:
    flat = report.to_flat()
    if fmt == "json":
        return json.dumps(flat, indent=2, sort_keys=True) + "\n"
    if fmt == "kv":
        return "".join(f"{k}={json.dumps(flat[k])}\n" for k in sorted(flat))
    raise ValueError(f"unknown format {fmt!r}, expected one of {FORMATS}")


def emit_report(report: MetricsReport, path, fmt: str | None = None) -> None:
    if fmt is None:
        fmt = "json" if str(path).endswith(".json") else "kv"
    text = render(report, fmt)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def parse_report(text: str, fmt: str = "json") -> MetricsReport:
    if fmt == "json":
        return MetricsReport.from_flat(json.loads(text))
    if fmt == "kv":
        flat = {}
        for line in text.splitlines():
            if line.strip():
                k, _, v = line.partition("=")
                flat[k] = json.loads(v)
        return MetricsReport.from_flat(flat)
    raise ValueError(f"unknown format {fmt!r}")


def load_report(path, fmt: str | None = None) -> MetricsReport:
    if fmt is None:
        fmt = "json" if str(path).endswith(".json") else "kv"
    with open(path, encoding="utf-8") as fh:
        return parse_report(fh.read(), fmt)
