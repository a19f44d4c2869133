"""Single-tap MU-MIMO precoding and decoding for FBMC-OQAM under frequency-selective channels."""

__version__ = "0.1.0"
