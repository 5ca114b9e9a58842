"""Fair optimization of decision rules under moment-independence constraints."""

__version__ = "0.1.0"
