"""Spectral approximation of cyclic normal operators through finite compressions."""
