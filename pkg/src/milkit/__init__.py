"""milkit: a self-contained multiple-instance-learning toolkit.

Train and evaluate attention-based MIL classifiers on bag datasets, generate
the synthetic digit-bags benchmark, and export attention scores for
interpretability. See the CLI (``milkit --help``) for the command surface.
"""

__version__ = "0.1.0"

from .autodiff import Graph, Tensor
from .models import Bag

__all__ = ["Graph", "Tensor", "Bag", "__version__"]
