"""Station systems, observation parsing and background grid packs."""
