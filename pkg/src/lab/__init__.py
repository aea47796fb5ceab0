"""Numerical core of the convex-integration estimate lab."""
