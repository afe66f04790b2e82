"""coherank: a desk-scale workbench for training and evaluating dense
retrievers whose rankings stay coherent across lexical query variants."""

from ._kernels import backend as kernel_backend

__version__ = "0.1.0"

__all__ = ["__version__", "kernel_backend"]
