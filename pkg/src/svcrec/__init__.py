"""Service bundle recommendation over an evolving service co-invocation graph."""
__version__ = "0.1.0"
