"""Panel model, panel files and synthetic populations."""
