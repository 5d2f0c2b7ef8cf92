"""Unsupervised feature extraction of winding numbers with a numpy convolutional autoencoder."""

__version__ = "0.1.0"
