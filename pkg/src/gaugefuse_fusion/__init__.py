"""Station-over-background precipitation fusion."""
