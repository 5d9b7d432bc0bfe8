"""Scenario construction, experiment runs and the command-line interface."""
