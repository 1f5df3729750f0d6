"""Closed-form expected synaptic updates as a function of spike timing.

A pre-before-post spike pair separated by a small interval eps yields an
expected potentiation (1/eps) * exp(-delta_pre * eps); the reversed order
yields an expected depression -delta_post * exp(-delta_post * eps).  The
curve over signed intervals reproduces the classic timing-dependent
plasticity shape.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass


@dataclass
class StdpPoint:
    """Signed spike-time difference (positive = pre before post) and the
    expected weight change at that interval."""

    dt: float
    dw: float


def stdp_update(y_pre: int, alpha_post: float, delta_post: float) -> float:
    """Local single-synapse update: -y_pre * alpha_post * delta_post.

    The update fires only when the post-synaptic unit transitions while the
    pre-synaptic unit is excited; alpha_post = +-1/2 carries the sign of the
    transition and delta_post its rate before the transition.
    """
    if delta_post <= 0:
        raise ValueError(f"delta_post must be positive, got {delta_post}")
    return -float(y_pre) * float(alpha_post) * float(delta_post)


def stdp_curve(delta_pre: float, delta_post: float, dts) -> list[StdpPoint]:
    """Expected update at each signed interval; singular at dt = 0."""
    if delta_pre <= 0 or delta_post <= 0:
        raise ValueError("firing rates must be positive")
    points = []
    for dt in dts:
        dt = float(dt)
        if dt == 0.0:
            raise ValueError("spike-time difference 0 is singular")
        eps = abs(dt)
        if dt > 0:
            dw = (1.0 / eps) * math.exp(-delta_pre * eps)
        else:
            dw = -delta_post * math.exp(-delta_post * eps)
        points.append(StdpPoint(dt, dw))
    return points


def emit_stdp_csv(points: list[StdpPoint], path) -> None:
    """Two-column CSV (dt, dw) with a header row."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dt", "dw"])
        for p in points:
            writer.writerow([repr(p.dt), repr(p.dw)])


def read_stdp_csv(path) -> list[StdpPoint]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["dt", "dw"]:
            raise ValueError(f"unexpected header {header!r}")
        return [StdpPoint(float(dt), float(dw)) for dt, dw in reader]
