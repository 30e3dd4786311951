"""Style obfuscation by invariance: encoder-decoder models with a gradient
reversal style head, a fastText-style adversary, and the evaluation metrics
used to compare obfuscated text against its source."""

__version__ = "0.1.0"
