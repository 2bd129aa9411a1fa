"""Hardware-aware architecture search for bounded bio-signal DNNs.

The package covers the full exploration pipeline: enumeration and genome
encoding of the bounded ResNet+LSTM architecture family, analytical
storage/FLOP cost modeling, weighted genetic search with Pareto-front
extraction, pluggable fitness evaluation (surrogate, lookup table, or an
external trainer process), magnitude pruning and k-means quantization of
weight stores, and construction of windowed ECG datasets from WFDB records.
"""

__version__ = "0.1.0"

from .archspace import ArchParams, ArchitectureSpace, Chromosome, decode, encode, enumerate_space
from .netmodel import NetConfig, NetworkSummary, build, filter_schedule, s_max
from .search import Constraints, CostFunction, GaSettings, SearchResult, fitness, run_algorithm1

__all__ = [
    "ArchParams",
    "ArchitectureSpace",
    "Chromosome",
    "Constraints",
    "CostFunction",
    "GaSettings",
    "NetConfig",
    "NetworkSummary",
    "SearchResult",
    "build",
    "decode",
    "encode",
    "enumerate_space",
    "filter_schedule",
    "fitness",
    "run_algorithm1",
    "s_max",
]
