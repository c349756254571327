from .graphs import NetworkSpec, generate_synthetic, load_graph, select_rhs
from .report import MetricsReport, emit_report, load_report
from .simulation import SimConfig, TxRequest, build_network, generate_transactions, run_simulation

__all__ = [
    "NetworkSpec", "generate_synthetic", "load_graph", "select_rhs",
    "MetricsReport", "emit_report", "load_report",
    "SimConfig", "TxRequest", "build_network", "generate_transactions", "run_simulation",
]
