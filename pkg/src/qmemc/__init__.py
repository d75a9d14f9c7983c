"""Memory and thermodynamic costs of classical and quantum stochastic-process generators."""

__version__ = "0.1.0"
