"""Masking: moving-object classification and masked depth image composition."""
