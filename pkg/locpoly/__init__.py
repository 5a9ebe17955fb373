"""locpoly: kernel and local polynomial estimators with uniform-in-bandwidth diagnostics."""

__version__ = "0.1.0"
