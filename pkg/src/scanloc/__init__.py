"""Coarse-to-fine GUI grounding with a generalist scanner and a specialist locator."""

__version__ = "0.1.0"
