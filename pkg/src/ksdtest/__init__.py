"""Kernel Stein discrepancy goodness-of-fit testing."""
