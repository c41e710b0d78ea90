"""Synthetic vehicle trajectory generation and evaluation toolkit.

Estimates a Markov chain of per-step motion offsets from real trajectory
logs, procedurally generates trajectory + semantic-map samples with
multiple ground-truth futures, streams them to training clients over TCP,
and evaluates predictors under the ADE/FDE protocol.
"""

from trajgen.geometry import Pose, Trajectory, from_offsets, to_offsets
from trajgen.chain import MarkovChain, estimate, fit_clusters, sample_trajectory
from trajgen.mapgen import MapGenConfig, SemanticMap, build_scene
from trajgen.samples import MultimodalSample, SampleConfig, generate_sample

__version__ = "0.1.0"

__all__ = [
    "Pose",
    "Trajectory",
    "to_offsets",
    "from_offsets",
    "MarkovChain",
    "fit_clusters",
    "estimate",
    "sample_trajectory",
    "SemanticMap",
    "MapGenConfig",
    "build_scene",
    "MultimodalSample",
    "SampleConfig",
    "generate_sample",
    "__version__",
]
