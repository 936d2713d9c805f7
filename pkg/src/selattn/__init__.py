"""Selective-attention catching task: CTRNN agents, trial taxonomy, shaped evolution."""
__version__ = "0.1.0"
