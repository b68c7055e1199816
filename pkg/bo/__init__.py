"""Gaussian-process lambda search and BO trajectory stability."""
