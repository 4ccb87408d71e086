"""uvswap: cross-speaker voiced/unvoiced segment swapping and evaluation.

Builds "chimera" utterances by swapping unvoiced (and optionally voiced)
segments between two renditions of the same sentence, and evaluates the
result with a desk-scale phoneme-recognition grid plus a listening-test
service.
"""

__version__ = "0.1.0"

from .errors import UvswapError
