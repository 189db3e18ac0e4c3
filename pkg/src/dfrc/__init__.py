"""Dual-function radar-communication link simulator with CPM-LFM waveforms."""

__version__ = "0.1.0"
