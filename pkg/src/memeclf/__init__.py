"""Desk-scale multimodal hateful-meme classification pipeline."""

__version__ = "0.1.0"
