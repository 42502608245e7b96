"""Planar two-segment leg kinematics.

Leg frame: origin at the hip, x forward, z downward. Hip angle is measured
from the downward vertical, knee angle is relative to the thigh; a positive
knee angle folds the knee backward (the only branch used).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

WORKSPACE_EPS = 1e-6


@dataclass(frozen=True)
class LegGeometry:
    l1: float = 0.08
    l2: float = 0.08
    neutral_foot: tuple[float, float] = (0.0, 0.11)

    def __post_init__(self):
        if not (self.l1 > 0 and self.l2 > 0):
            raise ValueError("segment lengths must be positive")

    @property
    def r_min(self) -> float:
        return abs(self.l1 - self.l2) + WORKSPACE_EPS

    @property
    def r_max(self) -> float:
        return self.l1 + self.l2 - WORKSPACE_EPS


def forward_kinematics(hip, knee, geom: LegGeometry = LegGeometry()):
    """Foot position ``(x, z)`` in the hip frame. Broadcasts over arrays."""
    hip = np.asarray(hip, dtype=float)
    knee = np.asarray(knee, dtype=float)
    x = geom.l1 * np.sin(hip) + geom.l2 * np.sin(hip + knee)
    z = geom.l1 * np.cos(hip) + geom.l2 * np.cos(hip + knee)
    return x, z


def inverse_kinematics(x, z, geom: LegGeometry = LegGeometry()):
    """Joint angles reaching ``(x, z)``; targets outside the workspace are clamped.

    Returns ``(hip, knee, clamped)`` where ``clamped`` flags targets that had to
    be projected radially onto the reachable annulus.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    r = np.hypot(x, z)
    r_c = np.clip(r, geom.r_min, geom.r_max)
    clamped = r_c != r
    # a zero-length target has no direction; point it straight down
    safe = r > 0
    scale = np.where(safe, r_c / np.where(safe, r, 1.0), 1.0)
    xc = np.where(safe, x * scale, 0.0)
    zc = np.where(safe, z * scale, r_c)

    l1, l2 = geom.l1, geom.l2
    cos_knee = np.clip((r_c ** 2 - l1 ** 2 - l2 ** 2) / (2.0 * l1 * l2), -1.0, 1.0)
    knee = np.arccos(cos_knee)
    hip = np.arctan2(xc, zc) - np.arctan2(l2 * np.sin(knee), l1 + l2 * np.cos(knee))
    return hip, knee, clamped


def leg_jacobian(hip: float, knee: float, geom: LegGeometry = LegGeometry()) -> np.ndarray:
    """d(x, z)/d(hip, knee) in the hip frame."""
    c1, s1 = math.cos(hip), math.sin(hip)
    c12, s12 = math.cos(hip + knee), math.sin(hip + knee)
    return np.array([
        [geom.l1 * c1 + geom.l2 * c12, geom.l2 * c12],
        [-geom.l1 * s1 - geom.l2 * s12, -geom.l2 * s12],
    ])
