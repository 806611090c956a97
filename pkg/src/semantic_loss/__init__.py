"""Semantic loss for structured outputs: compile, evaluate, train."""

__version__ = "0.1.0"
