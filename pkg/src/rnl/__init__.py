"""Operator-valued Schatten norms, Rényi conditional entropies, channel
norms and adaptive QKD key rates."""

__version__ = "0.1.0"

from .channels import (
    LinearConstraint,
    cb_entropy,
    min_output_entropy,
    restricted_cb_entropy,
    trivial_constraint,
)
from .entropy import (
    ClassicalQuantumState,
    WeightFunction,
    cond_renyi_up,
    f_weighted_entropy,
    sandwiched_divergence,
    von_neumann_conditional,
)
from .operators import (
    DensityOperator,
    KrausChannel,
    LabeledOperator,
    apply_channel,
    partial_trace,
    tensor,
)
from .schatten import IndexProfile, NormResult, OptimizerConfig, norm_multi_index, schatten_norm

__all__ = [
    "ClassicalQuantumState",
    "DensityOperator",
    "IndexProfile",
    "KrausChannel",
    "LabeledOperator",
    "LinearConstraint",
    "NormResult",
    "OptimizerConfig",
    "WeightFunction",
    "apply_channel",
    "cb_entropy",
    "cond_renyi_up",
    "f_weighted_entropy",
    "min_output_entropy",
    "norm_multi_index",
    "partial_trace",
    "restricted_cb_entropy",
    "sandwiched_divergence",
    "schatten_norm",
    "tensor",
    "trivial_constraint",
    "von_neumann_conditional",
]
