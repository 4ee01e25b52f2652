"""Gaze-based cognitive load assessment."""
