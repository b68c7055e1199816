"""
Utility modules for Churn Lab: logging, keyed random streams, parallel
execution and result artifacts.
"""
