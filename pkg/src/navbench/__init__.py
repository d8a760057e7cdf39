"""2D dynamic-navigation benchmark: crowd simulation, planners, episode records and metrics."""

__version__ = "0.1.0"
