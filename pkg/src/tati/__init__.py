"""Translate the text inside an image and draw the translation back in place."""

__version__ = "0.1.0"
