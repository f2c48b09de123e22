from src.numerics.gradcheck import finite_diff_gradient, max_relative_error
from src.numerics.ops import (
    add,
    clamp_min,
    conv2d_same,
    elementwise,
    mul,
    reduce_mean,
    reduce_sum,
    relu,
    scale,
    take_channels,
)
from src.numerics.tensor import (
    ComputationRecord,
    ParamSet,
    RecordedOp,
    Tensor,
    backward,
    record_op,
)
