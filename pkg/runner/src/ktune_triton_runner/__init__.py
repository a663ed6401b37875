"""Reference benchmark runner speaking the ktune wire protocol (v1)."""

__version__ = "0.1.0"
