"""Passivity-aware safe RL for contact-rich planar manipulation."""
__version__ = "0.1.0"
