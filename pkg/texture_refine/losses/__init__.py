"""Perceptual features and training objectives."""
