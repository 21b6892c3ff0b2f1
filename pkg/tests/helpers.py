"""Shared test utilities: a smooth flat trajectory and small numeric helpers."""

import numpy as np

from fapp.flatness import CHAIN_LENGTHS, CHAIN_STARTS, FLAT_STATE_DIM

AMPLITUDES = np.array([1.0, 0.8, 0.3, 0.5])
FREQUENCIES = np.array([0.8, 1.1, 0.9, 0.6])
HEIGHT = 1.0


def sinusoidal_flat(t):
    """Flat state and input of a C-infinity test trajectory at time ``t``."""
    z = np.zeros(FLAT_STATE_DIM)
    v = np.zeros(4)
    for i, (start, n) in enumerate(zip(CHAIN_STARTS, CHAIN_LENGTHS)):
        a, w = AMPLITUDES[i], FREQUENCIES[i]
        d = [a * w ** k * np.sin(w * t + k * np.pi / 2) for k in range(5)]
        if i == 2:
            d[0] += HEIGHT
        z[start:start + n] = d[:n]
        v[i] = d[n]
    return z, v


def random_flat_state(rng, tilt=0.6):
    """Random flat state with bounded tilt (acceleration well away from free fall)."""
    z = np.zeros(FLAT_STATE_DIM)
    z[[0, 4, 8]] = rng.uniform(-3, 3, 3)
    z[[1, 5, 9]] = rng.uniform(-2, 2, 3)
    z[[2, 6]] = rng.uniform(-tilt, tilt, 2) * 9.81
    z[10] = rng.uniform(-3, 3)
    z[[3, 7, 11]] = rng.uniform(-5, 5, 3)
    z[12] = rng.uniform(-np.pi, np.pi)
    z[13] = rng.uniform(-1, 1)
    v = rng.uniform(-5, 5, 4)
    return z, v


ACCEPTANCE_LINES = []


def report(number, title, passed, detail):
    """Record and print one acceptance line; `conftest` repeats them in the summary."""
    line = f"{'PASS' if passed else 'FAIL'} [{number:2d}] {title}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return passed
