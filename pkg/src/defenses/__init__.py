"""Defenses: SPG-B, SPG-LD, SPG-R, baselines and exact oracles."""
