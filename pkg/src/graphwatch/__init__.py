"""Quantile control chart monitoring of a simulated ambulance road network,
with a graph convolutional classifier diagnosing the cause of a signal."""
from .graph import AttributedGraph, NoPathError, Topology, load_topology, shortest_path
from .kernels import BACKEND
from .spc import QuantileChartState, calibrate, control_limit, monitor, statistic

__version__ = "0.1.0"

__all__ = [
    "AttributedGraph",
    "BACKEND",
    "NoPathError",
    "QuantileChartState",
    "Topology",
    "calibrate",
    "control_limit",
    "load_topology",
    "monitor",
    "shortest_path",
    "statistic",
]
