"""Hierarchical graph pooling toolkit.

Sparse CSR kernel, a minimal reverse-mode autodiff core, graph convolution
and scoring layers, pooled-graph generation strategies, and a training
harness for graph classification.
"""

from . import dataset, diff, harness, layers, pooling, sparse

__version__ = "0.1.0"

__all__ = ["dataset", "diff", "harness", "layers", "pooling", "sparse", "__version__"]
