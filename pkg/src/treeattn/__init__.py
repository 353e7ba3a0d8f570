"""treeattn: latent binary-tree sentence encoding with attention pooling.

Induces unlabeled binary parse trees over raw sentences without tree
supervision, pools all tree nodes into sentence vectors through a learned
attention layer, trains classifiers on sentence and sentence-pair tasks,
and scores induced trees against branching baselines and reference parses.
"""

__version__ = "0.1.0"

from .tensor import Tape, Tensor, backward, finite_difference_check
from .trees import BinaryTree, export_bracketed, parse_bracketed
from .model import EncodedSentence, Model
from .training import Checkpoint, TrainConfig, evaluate, train

__all__ = [
    "__version__",
    "Tape", "Tensor", "backward", "finite_difference_check",
    "BinaryTree", "export_bracketed", "parse_bracketed",
    "EncodedSentence", "Model",
    "Checkpoint", "TrainConfig", "evaluate", "train",
]
