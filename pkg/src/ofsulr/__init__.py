"""Cluster-derived labels, PCA feature selection and tuned logistic regression for tabular data."""

__version__ = "0.1.0"
