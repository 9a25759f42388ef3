"""Logistic-regression-weighted soft K-nearest-neighbour case retrieval."""

__version__ = "0.1.0"


class LrknnError(Exception):
    """Base class for domain errors raised by this package."""
