"""Closed-loop simulation: plant, tasks, baseline controller, metrics and traces."""
