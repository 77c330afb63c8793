"""Distributionally robust bounds for max-type objectives under mean and
block-diagonal second-moment information, with application front ends for
appointment scheduling, PERT longest paths, and linear assignment."""

__version__ = "0.1.0"
