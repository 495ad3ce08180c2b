"""Tracking: pinhole geometry, per-object extended Kalman filter and the filter bank."""
