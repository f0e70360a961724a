"""Services package: image I/O, datasets, checkpoints and training."""
