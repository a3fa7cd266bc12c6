"""Experiment configuration, execution, export and the CLI."""
