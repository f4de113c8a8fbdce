from .analysis import emit_dot, estimate_flops, estimate_memory, propagate_shapes
from .quant import QuantConfig, calibrate, convert, prepare
from .transform import (
    PassReport,
    eliminate_common_subexpressions,
    eliminate_dead_code,
    fuse_conv_bn,
    replace_activation,
)

__all__ = [
    "PassReport", "QuantConfig", "calibrate", "convert", "eliminate_common_subexpressions",
    "eliminate_dead_code", "emit_dot", "estimate_flops", "estimate_memory", "fuse_conv_bn",
    "prepare", "propagate_shapes", "replace_activation",
]
