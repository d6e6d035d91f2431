"""Digital-asset price regression: cleaning, features, models and evaluation."""

__version__ = "0.1.0"
