"""Full-reference image quality estimator fusion and evaluation toolkit."""

__version__ = "0.1.0"
