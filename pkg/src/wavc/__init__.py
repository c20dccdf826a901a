"""Model-free wide-area voltage control from ambient PMU data."""

__version__ = "0.1.0"
