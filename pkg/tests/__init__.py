"""Test package for castellan."""
