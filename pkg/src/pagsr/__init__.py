"""Guided thermal super-resolution from pyramidal edge maps with attention fusion."""

__version__ = "0.1.0"
