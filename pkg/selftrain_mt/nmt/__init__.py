"""Attention encoder-decoder: model, decoding, training and checkpoints."""

from . import nmt_checkpoint, nmt_config, nmt_decode, nmt_model, nmt_train

__all__ = ["nmt_checkpoint", "nmt_config", "nmt_decode", "nmt_model", "nmt_train"]
