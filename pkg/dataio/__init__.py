"""Dataset ingestion, splitting and bootstrap sampling for Churn Lab."""
