"""Nuisance-robust CATE estimation: adversarial training against propensity ambiguity."""

__version__ = "0.1.0"
