"""Secretary problems where part of the input is revealed upfront as a random sample."""

__version__ = "0.1.0"
