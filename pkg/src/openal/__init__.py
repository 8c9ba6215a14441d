"""Open-set active learning over feature-vector pools.

Each query round picks unlabeled samples that sit near the labeled target
classes and away from previously queried non-target samples (Mahalanobis
scoring), then keeps the most uncertain of them under a softmax probe.
"""

from ._kernels import BACKEND
from .engine import ExperimentConfig, RoundReport, run_experiment, run_seed
from .pool import SamplePool, SynthSpec, load_binary, load_csv, make_synth_spec, split_test, synth_pool

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ExperimentConfig",
    "RoundReport",
    "SamplePool",
    "SynthSpec",
    "load_binary",
    "load_csv",
    "make_synth_spec",
    "run_experiment",
    "run_seed",
    "split_test",
    "synth_pool",
]
