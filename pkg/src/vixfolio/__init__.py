"""Rolling-window portfolio backtests for a universe with one shortable asset."""

__version__ = "0.1.0"
