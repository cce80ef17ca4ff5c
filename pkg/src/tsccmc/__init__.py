"""Monte Carlo estimate of the depolarizing-noise threshold of topological subsystem color codes."""

__version__ = "0.1.0"
