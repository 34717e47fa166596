"""Tensor engine: recording tape, reverse-mode differentiation and the Adam optimizer."""

from . import tensor_autodiff, tensor_optim

__all__ = ["tensor_autodiff", "tensor_optim"]
