"""Arabic pronoun resolution as sequence-to-sequence token scoring."""

__version__ = "0.1.0"
