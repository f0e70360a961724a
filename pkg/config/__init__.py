"""Configuration package for the ViG age estimator."""
