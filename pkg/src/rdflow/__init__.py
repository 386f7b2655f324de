"""rdflow: flow-matching generative models with graph-coupled velocity fields.

The velocity field is the sum of a pointwise reaction network and a
graph-based diffusion correction computed over the sample batch.  The
package covers training (conditional flow matching), ODE-based sampling
(fixed-step and adaptive integrators), distribution metrics, and an
experiment harness with a CLI.
"""

from .errors import (
    ConfigError,
    ContractViolation,
    DivergenceError,
    GraphDegreeError,
    NumericFailure,
)
from .fmtrain import (
    TrainConfig,
    TrainLog,
    TrainingTriplet,
    fm_loss,
    load_checkpoint,
    make_training_triplet,
    restore_parameters,
    save_checkpoint,
    train,
)
from .integrate import IntegratorConfig, Trajectory, integrate_batch, sample_generation
from .metrics import energy_distance, knn_recall, sliced_w2
from .synthdata import DATASET_NAMES, DatasetSpec, SampleBatch, sample_source, sample_target
from .velocity import ADJACENCY_KINDS, VARIANTS, CompositeField, ModelConfig, build_composite_field

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractViolation",
    "DivergenceError",
    "GraphDegreeError",
    "NumericFailure",
    "TrainConfig",
    "TrainLog",
    "TrainingTriplet",
    "fm_loss",
    "load_checkpoint",
    "make_training_triplet",
    "restore_parameters",
    "save_checkpoint",
    "train",
    "IntegratorConfig",
    "Trajectory",
    "integrate_batch",
    "sample_generation",
    "energy_distance",
    "knn_recall",
    "sliced_w2",
    "DATASET_NAMES",
    "DatasetSpec",
    "SampleBatch",
    "sample_source",
    "sample_target",
    "ADJACENCY_KINDS",
    "VARIANTS",
    "CompositeField",
    "ModelConfig",
    "build_composite_field",
    "__version__",
]
