"""Hierarchical-memory origin-destination demand forecasting on trip event streams."""

from .config import TrainConfig, load_config, parse_config
from .kernels import BACKEND
from .model import HMOD
from .trips import EventLog, ODMatrix, TripEvent, generate_synthetic, ingest, od_matrix

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "EventLog", "HMOD", "ODMatrix", "TrainConfig", "TripEvent",
    "generate_synthetic", "ingest", "load_config", "od_matrix", "parse_config",
]
