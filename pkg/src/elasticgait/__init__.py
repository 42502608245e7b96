"""Elastic quadruped locomotion: CPG gaits, TPE tuning, residual RL."""
