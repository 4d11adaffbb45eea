"""Numerical core and command-line front end."""
