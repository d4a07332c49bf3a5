"""Joint learning of tool shape and control for 2D manipulation tasks."""

__version__ = "0.1.0"
