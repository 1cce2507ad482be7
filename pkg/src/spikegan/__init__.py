"""Spiking GAN toolkit: probabilistic SNN generators trained against ANN discriminators."""

__version__ = "0.1.0"
