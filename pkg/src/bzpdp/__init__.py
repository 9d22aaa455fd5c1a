"""Resource/action-level authorization engine with a static policy floor,
risk-attribute ceiling, challenges and containments."""

__version__ = "0.1.0"
