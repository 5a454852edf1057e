"""Confidence-based acceptance policies over a pose distribution.

The reflection policy accepts when one reflection row holds nearly all of
the probability mass; the pose policy additionally requires the mass to
concentrate inside a narrow revolution window. Both compare mass to a
cutoff (default 99%) and reject otherwise, so downstream automation only
acts on high-confidence predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scoring import PoseDistribution

ACCEPT_POSE = "accept_pose"
ACCEPT_REFLECTION = "accept_reflection"
REJECT = "reject"


@dataclass(frozen=True)
class PolicyDecision:
    kind: str                       # accept_pose | accept_reflection | reject
    reflection_index: int = -1
    window_center_deg: float = float("nan")
    confidence: float = 0.0

    @property
    def accepted(self) -> bool:
        return self.kind != REJECT


def policy_reflection(dist: PoseDistribution, cutoff: float = 0.99) -> PolicyDecision:
    """Accept the reflection whose row mass reaches the cutoff, else reject."""
    marginal = dist.reflection_marginal()
    best = int(np.argmax(marginal))  # argmax keeps the lowest index on ties
    if marginal[best] >= cutoff:
        return PolicyDecision(ACCEPT_REFLECTION, best, confidence=float(marginal[best]))
    return PolicyDecision(REJECT, confidence=float(marginal[best]))


def window_masses(dist: PoseDistribution, window_deg: float) -> np.ndarray:
    """Mass inside a circular window centered at every bin, per reflection.

    A bin belongs to the window at center c when its circular distance to c
    is at most window_deg / 2. Returns (n_reflections, n_revolution).
    """
    if window_deg < 0:
        raise ValueError("window_deg must be non-negative")
    rows = dist.rows()
    n = dist.n_revolution
    step = 360.0 / n
    half_bins = int(np.floor(window_deg / 2.0 / step))
    offsets = np.arange(-half_bins, half_bins + 1)
    centers = np.arange(n)
    idx = (centers[:, None] + offsets[None, :]) % n
    return rows[:, idx].sum(axis=2)


def policy_pose(dist: PoseDistribution, cutoff: float = 0.99,
                window_deg: float = 15.0) -> PolicyDecision:
    """Accept when some circular window holds `cutoff` of the total mass.

    The window slides at grid resolution over each reflection row; ties
    resolve to the lowest angle, and reflection 0 wins over reflection 1.
    """
    masses = window_masses(dist, window_deg)
    flat_best = int(np.argmax(masses))  # row-major: reflection 0, angle 0 first
    refl, center_bin = divmod(flat_best, dist.n_revolution)
    conf = float(masses[refl, center_bin])
    if conf >= cutoff:
        step = 360.0 / dist.n_revolution
        return PolicyDecision(ACCEPT_POSE, refl, center_bin * step, conf)
    return PolicyDecision(REJECT, confidence=conf)