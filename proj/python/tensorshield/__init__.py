"""Tensor-decomposition defense toolkit."""

try:
    from ._tensorshield import *  # noqa: F401,F403  (installed layout)
except ImportError:
    from _tensorshield import *  # noqa: F401,F403  (build-tree layout)

__version__ = "0.1.0"
