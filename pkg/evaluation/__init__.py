"""Evaluation: trajectory error, tracking metrics and CSV reports."""
