"""Grid geometry, error types and shared file helpers."""
