"""AReLU: attention-based rectified linear units on a from-scratch numpy CNN stack."""
from .activations import (
    ACTIVATION_NAMES,
    AReLU,
    AReLUState,
    ActivationKind,
    PReLUState,
    activation_kind,
    arelu_backward,
    arelu_forward,
    baseline_backward,
    baseline_forward,
    clamp_c,
    elsa_attention,
    make_activation,
)
from .kernels import BACKEND
from .model import MnistConvSpec, SequentialModel, build_mnist_conv, load_checkpoint, save_checkpoint
from .optim import SGD, Adam, build_optimizer, zero_grads

__version__ = "0.1.0"
