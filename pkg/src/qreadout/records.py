"""Homodyne measurement records on a uniform grid.

A record holds ``n`` samples taken at the left endpoints of ``n``
integration intervals, so its span is ``n * dt`` starting at ``t0``.
``xi`` are the discretized white-noise values w_k / sqrt(dt); ``current``
are the corresponding output-current samples.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatchError


@dataclass
class HomodyneRecord:
    dt: float
    phi_lo: float
    xi: np.ndarray
    current: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        self.current = np.asarray(self.current, dtype=float)
        if self.xi.shape != self.current.shape or self.xi.ndim != 1:
            raise ValueError("xi and current must be 1-d arrays of equal length")
        if not self.dt > 0:
            raise ValueError("record dt must be positive")

    def __len__(self) -> int:
        return len(self.xi)

    @property
    def duration(self) -> float:
        return len(self) * self.dt

    @property
    def times(self) -> np.ndarray:
        """Sample times (left endpoints of the integration intervals)."""
        return self.t0 + self.dt * np.arange(len(self))

    def check_grid(self, dt: float, phi_lo: float, rtol: float = 1e-12):
        if abs(self.dt - dt) > rtol * max(self.dt, dt):
            raise GridMismatchError(
                f"record dt={self.dt} does not match configured dt={dt}")
        if abs(self.phi_lo - phi_lo) > 1e-12:
            raise GridMismatchError(
                f"record phi_lo={self.phi_lo} does not match configured {phi_lo}")

    def slice(self, start: int, stop: int) -> "HomodyneRecord":
        """Sub-record over sample indices [start, stop); t0 shifts accordingly."""
        return HomodyneRecord(self.dt, self.phi_lo,
                              self.xi[start:stop], self.current[start:stop],
                              t0=self.t0 + start * self.dt)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "current", "xi"])
            for t, i_smp, x in zip(self.times, self.current, self.xi):
                writer.writerow([f"{t:.17g}", f"{i_smp:.17g}", f"{x:.17g}"])

    @classmethod
    def from_csv(cls, path, phi_lo: float) -> "HomodyneRecord":
        data = np.genfromtxt(path, delimiter=",", names=True)
        t = np.atleast_1d(data["t"])
        if len(t) < 1:
            raise ValueError(f"empty record file: {path}")
        dt = float(t[1] - t[0]) if len(t) > 1 else float(t[0]) or 1.0
        return cls(dt=dt, phi_lo=phi_lo,
                   xi=np.atleast_1d(data["xi"]),
                   current=np.atleast_1d(data["current"]),
                   t0=float(t[0]))


def record_from_noise(w: np.ndarray, current: np.ndarray, dt: float,
                      phi_lo: float, t0: float = 0.0) -> HomodyneRecord:
    """Build a record from raw standard-normal draws w_k (xi_k = w_k/sqrt(dt))."""
    return HomodyneRecord(dt, phi_lo, np.asarray(w) / np.sqrt(dt), current, t0)
