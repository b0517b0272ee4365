"""Robust max-min-fair beamformer design for RSMA-aided VLC downlinks."""

__version__ = "0.1.0"
