"""Predictive-coding state embeddings for reward shaping in sparse-reward RL."""

__version__ = "0.1.0"
