"""Hand-rolled neural network: layers, parameter container, gradients.

Everything here is explicit numpy (or the compiled kernels, see
``backend``); there is no autodiff. Each forward op has a matching
backward op, and ``gradcheck`` verifies all of them against finite
differences.
"""

from .backend import active_backend, conv2d_backward, conv2d_forward, maxpool2x2_backward, maxpool2x2_forward
from .layers import dropout_backward, dropout_forward, elu, elu_grad, masked_log_softmax, masked_softmax
from .network import NetworkSpec, init_params, network_backward, network_forward

__all__ = [
    "active_backend",
    "conv2d_forward",
    "conv2d_backward",
    "maxpool2x2_forward",
    "maxpool2x2_backward",
    "elu",
    "elu_grad",
    "dropout_forward",
    "dropout_backward",
    "masked_softmax",
    "masked_log_softmax",
    "NetworkSpec",
    "init_params",
    "network_forward",
    "network_backward",
]
