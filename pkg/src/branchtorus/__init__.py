"""Branched transport on the flat torus."""
