"""Single-arm and dual-arm pick-and-place regrasp planning."""

__version__ = "0.1.0"
