"""Logging, configuration and CSV output."""
