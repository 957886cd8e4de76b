"""World-state reconstruction training framework for a simulated biped."""

__version__ = "1.0.0"
