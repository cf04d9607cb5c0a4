"""Gradient engine, data, optimizer loop and metrics."""
