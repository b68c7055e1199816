"""Experiment orchestration layer for Churn Lab."""
