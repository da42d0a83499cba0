"""Call-log drop-off prediction and Whittle-index intervention planning."""

__version__ = "0.1.0"
