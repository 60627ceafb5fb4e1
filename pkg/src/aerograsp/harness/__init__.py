"""Scenario loading, simulation loop, telemetry, metrics, benches and CLI."""
