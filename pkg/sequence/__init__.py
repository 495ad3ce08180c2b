"""Sequence I/O: TUM RGB-D streams, detection files and pipeline outputs."""
