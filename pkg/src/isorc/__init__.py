"""Random-cluster model on isoradial graphs: weights, lattices, star-triangle
transformations, events, the quantum limit and an experiment harness."""

from .weights import ModelParams, edge_weight, dual_edge_weight, quantum_rates
from .lattice import AngleSequences, IsoradialGraph, build_square_lattice, build_mixed
from .rcm import BoundaryCondition, Configuration, MeasureSpec, exact_distribution
from .stt import coupled_transform, find_stt_sites, track_exchange, transform_graph
from .events import DomainSpec, EventSpec
from .quantum import ContinuumConfig, QuantumParams, sample_quantum
from .harness import ExperimentConfig, EstimateRecord

__version__ = "0.1.0"
