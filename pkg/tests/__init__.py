"""
Test suite for Churn Lab.
"""
