"""Test suite for the immersed-boundary engine."""
