"""Timeline segmentation, sliding windows and tensor files."""
