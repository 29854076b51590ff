"""Device-to-simulator clock mapping from paired sync marks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Devices drift by seconds per hour at most; a gain outside this band
# means the marks were mispaired, not that the clock runs at 99% speed.
GAIN_BAND = (0.99, 1.01)


class ClockFitError(ValueError):
    pass


@dataclass(frozen=True)
class ClockMap:
    """t_sim = a * t_dev + b, with the fit residual reported."""
    a: float
    b: float
    residual_rms: float = 0.0

    def __post_init__(self):
        if not GAIN_BAND[0] <= self.a <= GAIN_BAND[1]:
            raise ClockFitError(
                f"clock gain {self.a} outside sanity band {GAIN_BAND}")

    def to_sim(self, t_dev):
        return self.a * np.asarray(t_dev) + self.b

    def to_dev(self, t_sim):
        return (np.asarray(t_sim) - self.b) / self.a


def fit_clock_map(device_marks, sim_marks) -> ClockMap:
    """Least-squares line through paired marks (exact for two marks).

    Marks must be strictly increasing on both clocks and at least two.
    """
    dev = np.asarray(device_marks, dtype=float)
    sim = np.asarray(sim_marks, dtype=float)
    if dev.size != sim.size:
        raise ClockFitError("mark count mismatch")
    if dev.size < 2:
        raise ClockFitError("need at least 2 paired marks")
    if not (np.all(np.diff(dev) > 0) and np.all(np.diff(sim) > 0)):
        raise ClockFitError("marks must be strictly increasing")
    # closed-form least squares; better conditioned than polyfit for
    # large epoch-style offsets
    dev_mean = dev.mean()
    sim_mean = sim.mean()
    denom = float(np.sum((dev - dev_mean) ** 2))
    a = float(np.sum((dev - dev_mean) * (sim - sim_mean)) / denom)
    b = float(sim_mean - a * dev_mean)
    residual = sim - (a * dev + b)
    rms = float(np.sqrt(np.mean(residual ** 2)))
    return ClockMap(a=a, b=b, residual_rms=rms)
