"""Churn, disagreement and ranking-stability measures."""
