"""Command-line entry point and project manifest."""
