"""Device-independent entropy bounds from noncommutative polynomial optimization."""

__version__ = "0.1.0"
