"""Black-box evolution attacks on image classifiers."""

__version__ = "0.1.0"
