"""Feasible-set based online monitoring of STL specifications."""
