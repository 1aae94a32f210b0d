"""Robust mixture models with geometric medians and median covariation matrices."""
