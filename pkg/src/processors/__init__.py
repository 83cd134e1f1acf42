"""Sweep and dominance processing."""
