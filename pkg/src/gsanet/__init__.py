"""Global self-attention networks.

Linear-cost content attention plus axial relative-position attention,
assembled into attention-only ResNet variants, with exact parameter/FLOP
accounting, brute-force verification oracles and scaling benchmarks.
"""

from .attention import (
    GsaConfig,
    GsaWeights,
    RelPosEmbedding,
    axial_content_attention,
    build_reindex_tensor,
    content_attention,
    gsa_backward,
    gsa_forward,
    gsa_parameters,
    init_gsa_params,
    kqv_project,
    positional_attention,
    positional_attention_axis,
)
from .costs import CostReport, count_flops, count_params, scaling_benchmark
from .model import (
    ModelSpec,
    build_model,
    describe_model,
    model_forward,
    plan_model,
)
from .tensor import (
    BatchNormState,
    ContractionError,
    ShapeError,
    avg_pool_2x2,
    batch_norm,
    contract,
    pointwise_conv,
    seeded_init,
    softmax,
)
from .train import ToyNetSpec, make_synthetic_dataset, train_toy

__version__ = "0.1.0"

__all__ = [
    "BatchNormState",
    "ContractionError",
    "CostReport",
    "GsaConfig",
    "GsaWeights",
    "ModelSpec",
    "RelPosEmbedding",
    "ShapeError",
    "ToyNetSpec",
    "avg_pool_2x2",
    "axial_content_attention",
    "batch_norm",
    "build_model",
    "build_reindex_tensor",
    "contract",
    "content_attention",
    "count_flops",
    "count_params",
    "describe_model",
    "gsa_backward",
    "gsa_forward",
    "gsa_parameters",
    "init_gsa_params",
    "kqv_project",
    "make_synthetic_dataset",
    "model_forward",
    "plan_model",
    "pointwise_conv",
    "positional_attention",
    "positional_attention_axis",
    "scaling_benchmark",
    "seeded_init",
    "softmax",
    "train_toy",
]
