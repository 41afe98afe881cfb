"""Reference forecasts."""
