"""Distributional regression for intermittent count demand."""
