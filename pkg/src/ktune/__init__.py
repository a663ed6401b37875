"""ktune: host-side autotuning for JIT-compiled GPU kernels."""

__version__ = "0.1.0"
