"""Shared numerical core: spline bases, penalized negative-binomial IRLS,
LASSO coordinate descent, and coefficient-posterior sampling."""
