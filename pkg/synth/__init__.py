"""Synthetic scene oracle: analytic RGB-D sequences with exact ground truth."""
