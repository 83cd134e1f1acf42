"""Scoring, threat models, LD index and the shared metrics path."""
