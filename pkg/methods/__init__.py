"""Training procedures and deployment-time prediction rules."""
