"""Computation layer of the Littlewood–Paley laboratory."""
