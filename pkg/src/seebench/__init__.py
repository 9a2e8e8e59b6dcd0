"""Side-effect evaluation harness for concept erasure in text-to-image models."""

__version__ = "0.1.0"
