"""Two-phase sentiment-to-stock-movement prediction pipeline."""

__version__ = "0.1.0"
