"""Parametric finite elements for two-phase fluidic biomembranes."""
