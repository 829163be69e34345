from .config import MODES, PLAINTEXT_BASELINE, ZERO_TRUST, RelayConfig, RelayLink
from .node import (ACTIVE_STATES, DELIVERED, ISSUED, TRANSPORTED, VOIDED, InTransitRecord, Relay,
                   SaeKeyPoolEntry, keypair_matches, load_keypair, write_keypair)
from .transport import HttpTransport, InProcessTransport

__all__ = [
    "ACTIVE_STATES", "DELIVERED", "HttpTransport", "ISSUED", "InProcessTransport", "InTransitRecord",
    "MODES", "PLAINTEXT_BASELINE", "Relay", "RelayConfig", "RelayLink", "SaeKeyPoolEntry",
    "TRANSPORTED", "VOIDED", "ZERO_TRUST", "keypair_matches", "load_keypair", "write_keypair",
]
