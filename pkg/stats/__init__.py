"""Bootstrap confidence intervals and rank tests."""
