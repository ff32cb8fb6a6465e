"""Wasserstein deconvolution toolkit: noise models, inversion operators,
a Dirichlet-process mixture sampler and numerical verification studies."""

__version__ = "0.1.0"
