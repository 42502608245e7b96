"""Residual reinforcement learning on top of the CPG."""
