"""Depression detection from user timelines: a summary text branch and a
behavior branch fused late into a binary classifier."""

__version__ = "0.1.0"
