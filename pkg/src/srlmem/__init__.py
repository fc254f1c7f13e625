"""Retrieval-augmented semantic role labeling toolkit.

Tags each token of a (sentence, predicate) pair with its semantic role
using a stacked BiLSTM, optionally augmented with attention over labeled
neighbor sentences retrieved from the training set.
"""

__version__ = "0.1.0"

from . import attention, autodiff, cli, conll, kernels, model, retrieval, synthetic, training, vectors  # noqa: F401
