"""Discrete winding number of a circle-valued sequence."""

from __future__ import annotations

import numpy as np

MIN_MODULUS = 1e-9


class UndefinedPhaseError(ValueError):
    pass


def _as_complex(re, im) -> np.ndarray:
    z = np.asarray(re, dtype=np.float64) + 1j * np.asarray(im, dtype=np.float64)
    if z.ndim != 1 or z.size < 2:
        raise ValueError(f"need a 1-d sequence of at least 2 sites, got shape {z.shape}")
    small = np.flatnonzero(np.abs(z) < MIN_MODULUS)
    if small.size:
        raise UndefinedPhaseError(f"|phi| < {MIN_MODULUS} at site(s) {(small + 1).tolist()}; phase undefined")
    return z


def phase_steps(re, im) -> np.ndarray:
    """Principal-branch phase increments around the closed loop, in (-pi, pi].

    The loop is closed by a final step from the last site back to the first,
    which contributes nothing when the sequence is already periodic.
    """
    z = _as_complex(re, im)
    steps = np.angle(np.roll(z, -1) / z)
    steps[steps <= -np.pi] = np.pi
    return steps


def winding_value(re, im) -> float:
    """Pre-rounding winding, ``sum(steps) / 2pi``."""
    return float(phase_steps(re, im).sum() / (2 * np.pi))


def winding_number(re, im) -> int:
    return int(round(winding_value(re, im)))


def winding_residual(re, im) -> float:
    """Distance of the pre-rounding winding from the nearest integer."""
    w = winding_value(re, im)
    return abs(w - round(w))
