"""Models package: configuration, parameter, graph and dataset records."""
