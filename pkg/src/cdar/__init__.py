"""Cross-domain activity recognition: source-domain selection and transfer networks."""

__version__ = "0.1.0"
