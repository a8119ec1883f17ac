"""Context-aware token-to-word segmentation.

A character-level attention encoder-decoder that splits surface tokens into
word units, optionally conditioned on per-token context vectors and jointly
predicting per-segment labels.
"""

__version__ = "0.1.0"
