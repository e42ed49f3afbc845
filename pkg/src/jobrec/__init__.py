"""Two-stage job recommender: candidate generation plus GBDT ranking."""

__version__ = "0.1.0"
