"""Baseline trajectory tracker: PD position control with static attitude inversion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .flatness import FLAT_STATE_DIM, POSITION_SLOTS, CommandInput, QuadrotorParams, wrap_angle

TILT_LIMIT = 0.5

FLAT_STATE_COLUMNS = (
    "x", "x_d1", "x_d2", "x_d3",
    "y", "y_d1", "y_d2", "y_d3",
    "z", "z_d1", "z_d2", "z_d3",
    "psi", "psi_d1",
)


@dataclass(frozen=True)
class TrackerGains:
    kp_xy: float = 4.0
    kd_xy: float = 3.5
    kp_z: float = 2.0
    kp_psi: float = 2.0

    def __post_init__(self):
        if not all(g >= 0 for g in (self.kp_xy, self.kd_xy, self.kp_z, self.kp_psi)):
            raise ValueError("tracker gains must be non-negative")


class TimedReference:
    """Flat-state reference sampled in time.

    Lookups interpolate linearly between samples. Before the first sample the
    first state is returned; after the last one the final position and yaw are
    held with all their derivatives set to zero.
    """

    def __init__(self, times, states):
        times = np.asarray(times, dtype=float).ravel()
        states = np.asarray(states, dtype=float).reshape(-1, FLAT_STATE_DIM)
        if times.size == 0 or times.size != states.shape[0]:
            raise ValueError("reference needs matching, non-empty times and states")
        if np.any(np.diff(times) <= 0):
            raise ValueError("reference timestamps must be strictly increasing")
        self.times = times
        self.states = states

    def __len__(self):
        return self.times.size

    @property
    def duration(self):
        return float(self.times[-1] - self.times[0])

    def at(self, t):
        if t <= self.times[0]:
            return self.states[0].copy()
        if t >= self.times[-1]:
            return self.final_hold()
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        t0, t1 = self.times[i], self.times[i + 1]
        a = (t - t0) / (t1 - t0)
        return (1.0 - a) * self.states[i] + a * self.states[i + 1]

    def final_hold(self):
        """Final position and yaw at rest."""
        hold = np.zeros(FLAT_STATE_DIM)
        hold[list(POSITION_SLOTS)] = self.states[-1, list(POSITION_SLOTS)]
        return hold

    def positions_at(self, ts):
        return np.array([self.at(t)[[0, 4, 8]] for t in ts])

    def to_csv(self, filename):
        with open(filename, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("time",) + FLAT_STATE_COLUMNS)
            for t, z in zip(self.times, self.states):
                writer.writerow([repr(float(t))] + [repr(float(val)) for val in z])

    @classmethod
    def from_csv(cls, filename):
        with open(filename, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != ("time",) + FLAT_STATE_COLUMNS:
                raise ValueError(f"unexpected reference header in {filename}")
            rows = np.array([[float(val) for val in row] for row in reader])
        return cls(rows[:, 0], rows[:, 1:])


def track(z_est, t, ref, gains=TrackerGains(), params=QuadrotorParams()):
    """Inner-loop command tracking the timed reference at time ``t``."""
    z_ref = ref.at(t)
    z_est = np.asarray(z_est, dtype=float)
    g = params.gravity

    a_des = np.empty(2)
    for i, start in enumerate((0, 4)):
        a_des[i] = (z_ref[start + 2]
                    + gains.kd_xy * (z_ref[start + 1] - z_est[start + 1])
                    + gains.kp_xy * (z_ref[start] - z_est[start]))
    az = z_ref[10]

    psi = z_est[12]
    cps, sps = math.cos(psi), math.sin(psi)
    a_fwd = cps * a_des[0] + sps * a_des[1]
    a_left = -sps * a_des[0] + cps * a_des[1]
    vertical = max(g + az, 0.1)
    theta_cmd = math.atan2(a_fwd, vertical)
    phi_cmd = math.atan2(-a_left, math.hypot(a_fwd, vertical))
    theta_cmd = min(max(theta_cmd, -TILT_LIMIT), TILT_LIMIT)
    phi_cmd = min(max(phi_cmd, -TILT_LIMIT), TILT_LIMIT)

    zdot_cmd = z_ref[9] + gains.kp_z * (z_ref[8] - z_est[8])
    r_cmd = z_ref[13] + gains.kp_psi * wrap_angle(z_ref[12] - psi)
    return CommandInput(float(zdot_cmd), float(phi_cmd), float(theta_cmd), float(r_cmd))
