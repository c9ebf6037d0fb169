from .gradcheck import check_gradients, grad_check
from .layers import ConvLSTMCell, Conv2d, Dense, Module
from .optim import Adam
from .tensor import Tensor

__all__ = ["check_gradients", "grad_check", "ConvLSTMCell", "Conv2d", "Dense", "Module", "Adam", "Tensor"]
