"""SimVP-style CNN video prediction on a self-contained autodiff engine."""

__version__ = "0.1.0"
