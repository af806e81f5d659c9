"""Learning subset choice functions with Pareto-embeddings."""

__version__ = "0.1.0"
