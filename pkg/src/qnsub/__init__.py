"""Numerical toolkit for quasinearly subharmonic functions."""
