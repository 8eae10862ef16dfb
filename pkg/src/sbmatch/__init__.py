"""Matching algorithms and their fluid limits on sparse stochastic block models."""
