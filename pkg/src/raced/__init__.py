"""Payment routing through a Chord ring of routing helpers over a simulated PCN."""
from .dht import MaxAmountRecord, Ring, RingConfig, Volunteer, dht_setup
from .identity import Identity, generate_identity
from .ledger import Ledger
from .routing import PathRequest, TransactionOutcome, find_path, pay, route_payment, validate_paths

__all__ = [
    "MaxAmountRecord", "Ring", "RingConfig", "Volunteer", "dht_setup",
    "Identity", "generate_identity", "Ledger",
    "PathRequest", "TransactionOutcome", "find_path", "pay", "route_payment", "validate_paths",
]
__version__ = "0.1.0"
