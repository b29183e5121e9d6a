"""Scalar-quantized latent flow matching at desk scale.

Subpackages: ``numcore`` (autodiff tensors), ``sqlat`` (quantization
lattice), ``codec`` (waveform codec), ``flow`` (flow matching + sampler),
``backbone`` (transformer velocity net), ``duration`` (length
predictors), ``lab`` (experiments), ``checkpoint`` (binary persistence),
``kernels`` (numba/numpy hot loops).
"""

__version__ = "0.1.0"
