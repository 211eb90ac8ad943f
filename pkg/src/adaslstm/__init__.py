"""Depth-adaptive sentence-state LSTM text classification.

A sentence-state LSTM updates all word states in parallel each layer while a
global sentence node aggregates them.  The depth-adaptive variant lets every
word choose how many layers to run, copying its state through the remaining
layers, which trades almost no accuracy for a large cut in computation.
"""

__version__ = "0.1.0"
