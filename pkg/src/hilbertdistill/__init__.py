"""Hilbert-curve feature mapping and cross-dimensionality distillation toolkit."""

from .activation import (
    FeatureStack,
    GradientStack,
    activation_map,
    activation_mask,
    channel_weights,
)
from .curve import (
    CurveSpec,
    MappingTable,
    Region,
    WalkGuide,
    build_mapping,
    expand_guides,
    inverse_transform,
    render_svg,
    select_order,
    transform_index,
)
from .harness import (
    HarnessConfig,
    RunReport,
    ari,
    bench_curve,
    reduce3d,
    run_experiment,
    train_student,
    train_teacher,
)
from .losses import (
    AlignLayer,
    LinearCode,
    LossReport,
    fc_align,
    hd_loss,
    map_features,
    map_features_weighted,
    nearest_rescale,
    total_loss,
    vhd_loss,
)
from .synth import SynthDataset, make_synthetic
from .tape import grad_check
from .vh import ActivationMask, VhMappingTable, subtree_activity, vh_expand, vh_mapping

__all__ = [
    "ActivationMask",
    "AlignLayer",
    "CurveSpec",
    "FeatureStack",
    "GradientStack",
    "HarnessConfig",
    "LinearCode",
    "LossReport",
    "MappingTable",
    "Region",
    "RunReport",
    "SynthDataset",
    "VhMappingTable",
    "WalkGuide",
    "activation_map",
    "activation_mask",
    "ari",
    "bench_curve",
    "build_mapping",
    "channel_weights",
    "expand_guides",
    "fc_align",
    "grad_check",
    "hd_loss",
    "inverse_transform",
    "make_synthetic",
    "map_features",
    "map_features_weighted",
    "nearest_rescale",
    "reduce3d",
    "render_svg",
    "run_experiment",
    "select_order",
    "subtree_activity",
    "total_loss",
    "train_student",
    "train_teacher",
    "transform_index",
    "vh_expand",
    "vh_mapping",
    "vhd_loss",
]
