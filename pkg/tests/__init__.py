"""Gaugefuse test suite."""
