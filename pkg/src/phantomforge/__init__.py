"""phantomforge: quality-controlled digital-twin phantoms from label volumes."""

__version__ = "0.1.0"
