"""ADME paragraph labeling: SPL ingestion, title annotation, baselines and a small encoder."""

__version__ = "0.1.0"
