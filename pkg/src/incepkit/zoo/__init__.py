from .builder import (
    assemble,
    build_inception_block,
    build_reduction_a,
    build_reduction_b,
    build_stem,
    residualize,
    scale_filters,
    stage_input_shapes,
)
from .config import VARIANTS, ArchConfig, ReductionAParams, canonical_variant, desk_config, load_definition
