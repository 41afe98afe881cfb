"""Level-based verification metrics, reports and sanity checks."""
