"""redeval: redundancy-aware construction and evaluation of multi-hop
retrieval benchmarks."""

__version__ = "0.1.0"
