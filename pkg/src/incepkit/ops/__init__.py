"""Reference forward/backward kernels. Arrays are NHWC numpy arrays."""
from .conv import ConvSpec, conv2d_backward, conv2d_direct, conv2d_forward, output_size, pad_amounts
from .gradcheck import finite_difference_gradient, relative_error
from .head import (
    dropout,
    fully_connected,
    fully_connected_backward,
    global_avgpool,
    global_avgpool_backward,
    relu,
    relu_backward,
    softmax,
    softmax_backward,
    softmax_cross_entropy,
)
from .merge import add_scaled, add_scaled_backward, concat_channels, split_channels
from .norm import BatchNormParams, batchnorm, batchnorm_backward
from .pool import pool2d, pool2d_backward, pool2d_direct
