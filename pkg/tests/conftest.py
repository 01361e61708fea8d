from __future__ import annotations

import numpy as np
import pytest

from touchauth.ingest import Stroke


def make_stroke(
    points,
    timestamps=None,
    user_id="u0",
    swipe_id="s0",
    session="A",
    pressures=None,
    areas=None,
    direction=None,
):
    """Stroke from a list of (x, y) points; timestamps default to 10 ms steps."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if timestamps is None:
        timestamps = np.arange(n, dtype=np.int64) * 10
    if pressures is None:
        pressures = np.full(n, 0.5)
    if areas is None:
        areas = np.full(n, 3.0)
    return Stroke(
        user_id=user_id,
        swipe_id=swipe_id,
        session=session,
        timestamps_ms=np.asarray(timestamps, dtype=np.int64),
        xs=points[:, 0],
        ys=points[:, 1],
        pressures=np.asarray(pressures, dtype=np.float64),
        areas=np.asarray(areas, dtype=np.float64),
        direction=direction,
    )


def random_stroke(rng: np.random.Generator, user_id="u0", swipe_id="s0", session="A"):
    """Non-degenerate random stroke: > 5 samples, distinct timestamps, dx != 0."""
    n = int(rng.integers(7, 26))
    start = rng.uniform(50, 900, size=2)
    delta = rng.uniform(-300, 300, size=2)
    if abs(delta[0]) < 5:
        delta[0] = 5.0 if delta[0] >= 0 else -5.0
    t = np.linspace(0, 1, n)
    pts = start + np.outer(t, delta) + rng.normal(0, 8, size=(n, 2))
    pts[0] = start
    pts[-1] = start + delta
    gaps = rng.integers(4, 30, size=n - 1)
    ts = np.concatenate(([0], np.cumsum(gaps))) + int(rng.integers(0, 10_000))
    stroke = make_stroke(
        pts,
        timestamps=ts,
        user_id=user_id,
        swipe_id=swipe_id,
        session=session,
        pressures=rng.uniform(0.1, 0.9, size=n),
        areas=rng.uniform(1.0, 9.0, size=n),
    )
    from touchauth.ingest import classify_direction
    import dataclasses

    return dataclasses.replace(stroke, direction=classify_direction(stroke))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
