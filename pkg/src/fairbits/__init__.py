"""fairbits: bit-metered fair-allocation protocols, exact fairness oracles,
and an empirical lower-bound lab."""

from .channel import Channel, Crs, Transcript
from .model import Allocation, Instance, Kind, Valuation, gen_instance
from .protocols import REGISTRY, Outcome, replay_protocol, run_protocol
from .shares import check_notion, share_profile

__all__ = [
    "Allocation",
    "Channel",
    "Crs",
    "Instance",
    "Kind",
    "Outcome",
    "REGISTRY",
    "Transcript",
    "Valuation",
    "check_notion",
    "gen_instance",
    "replay_protocol",
    "run_protocol",
    "share_profile",
]

__version__ = "0.1.0"
