"""Built-in junction scenarios and polyline reference sampling.

Geometry (right-hand traffic, lane width 3.5 m, junction center at the origin):
every maneuver is first built for a vehicle approaching from the west heading
+x, then rotated onto its arm. Turns are circular arcs discretised into the
polyline. References advance at constant target speed along the path with
heading tangent to the current segment.

GEOMETRY_VERSION is bumped whenever the generated references change.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ScenarioSpec

GEOMETRY_VERSION = 1

LANE = 3.5
ARM_ANGLE = {"W": 0.0, "S": 0.5 * math.pi, "E": math.pi, "N": 1.5 * math.pi}
_RUNOUT = 400.0
_ARC_POINTS = 24


def sample_polyline(points, speed: float, tau_s: float, T: int) -> np.ndarray:
    """Reference states (T+1, 4) spaced speed * tau_s apart in arc length.

    Samples past the last vertex extrapolate along the final segment.
    """
    pts = np.asarray(points, dtype=float)
    seg = np.diff(pts, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    keep = seg_len > 1e-12
    seg, seg_len = seg[keep], seg_len[keep]
    if len(seg) == 0:
        raise ValueError("polyline needs at least two distinct points")
    starts = np.concatenate([[0.0], np.cumsum(seg_len)])
    origins = np.concatenate([pts[:1], pts[:1] + np.cumsum(seg, axis=0)])[:-1]
    s = np.arange(T + 1) * speed * tau_s
    k = np.clip(np.searchsorted(starts, s, side="right") - 1, 0, len(seg) - 1)
    frac = (s - starts[k]) / seg_len[k]
    xy = origins[k] + frac[:, None] * seg[k]
    heading = np.arctan2(seg[k, 1], seg[k, 0])
    return np.column_stack([xy, heading, np.full(T + 1, speed)])


def _arc(center, radius, a0, a1, n=_ARC_POINTS):
    ang = np.linspace(a0, a1, n + 1)[1:]
    return np.column_stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)])


def maneuver_path(maneuver: str, start: float, lane_in: float, lane_out: float,
                  radius: float) -> np.ndarray:
    """Polyline in the west-arm frame: start at x = -start on y = -lane_in heading +x."""
    y0 = -lane_in
    p0 = np.array([[-start, y0]])
    if maneuver == "straight":
        return np.vstack([p0, [[_RUNOUT, -lane_out]]]) if lane_in == lane_out else \
            np.vstack([p0, [[-LANE, y0], [LANE, -lane_out], [_RUNOUT, -lane_out]]])
    if maneuver == "left":
        xs = lane_out - radius
        c = (xs, y0 + radius)
        arc = _arc(c, radius, -0.5 * math.pi, 0.0)
        return np.vstack([p0, [[xs, y0]], arc, [[lane_out, _RUNOUT]]])
    if maneuver == "right":
        xs = -lane_out - radius
        c = (xs, y0 - radius)
        arc = _arc(c, radius, 0.5 * math.pi, 0.0)
        return np.vstack([p0, [[xs, y0]], arc, [[-lane_out, -_RUNOUT]]])
    raise ValueError(f"unknown maneuver {maneuver!r}")


def _rotate(points, angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.asarray(points) @ np.array([[c, s], [-s, c]])


@dataclass(frozen=True)
class VehiclePlan:
    arm: str
    maneuver: str
    start: float  # distance before the junction center along the approach (m)
    speed: float
    lane_in: float
    lane_out: float
    radius: float = 0.0

    def path(self) -> np.ndarray:
        local = maneuver_path(self.maneuver, self.start, self.lane_in, self.lane_out, self.radius)
        return _rotate(local, ARM_ANGLE[self.arm])


def build_spec(plans, name: str, T: int = 100, tau_s: float = 0.1, **kw) -> ScenarioSpec:
    refs = np.stack([sample_polyline(p.path(), p.speed, tau_s, T) for p in plans])
    return ScenarioSpec(x0=refs[:, 0].copy(), references=refs, horizon=T, tau_s=tau_s,
                        name=name, **kw)


# main road along x with one lane per direction; the stem leaves southwards
T_JUNCTION = (
    VehiclePlan("W", "straight", start=38.0, speed=8.0, lane_in=0.5 * LANE, lane_out=0.5 * LANE),
    VehiclePlan("E", "left", start=40.0, speed=7.0, lane_in=0.5 * LANE, lane_out=0.5 * LANE,
                radius=1.5 * LANE),
    VehiclePlan("S", "left", start=26.0, speed=6.0, lane_in=0.5 * LANE, lane_out=0.5 * LANE,
                radius=1.5 * LANE),
)

# two lanes per direction: left turns use the inner lane, straight and right
# movers the outer one. Straight movers come first so every prefix is itself
# a usable scenario. Start offsets stagger arrivals so encounters are close
# but never head-on.
_INNER, _OUTER = 0.5 * LANE, 1.5 * LANE
INTERSECTION = (
    VehiclePlan("W", "straight", 26.0, 8.0, _OUTER, _OUTER),
    VehiclePlan("S", "straight", 32.0, 8.0, _OUTER, _OUTER),
    VehiclePlan("E", "straight", 50.0, 8.0, _OUTER, _OUTER),
    VehiclePlan("N", "straight", 50.0, 8.0, _OUTER, _OUTER),
    VehiclePlan("W", "left", 40.0, 6.0, _INNER, _INNER, radius=2 * LANE),
    VehiclePlan("S", "left", 22.0, 6.0, _INNER, _INNER, radius=2 * LANE),
    VehiclePlan("E", "left", 17.0, 6.0, _INNER, _INNER, radius=2 * LANE),
    VehiclePlan("N", "left", 32.0, 6.0, _INNER, _INNER, radius=2 * LANE),
    VehiclePlan("W", "right", 62.0, 7.0, _OUTER, _OUTER, radius=LANE),
    VehiclePlan("S", "right", 45.0, 7.0, _OUTER, _OUTER, radius=LANE),
    VehiclePlan("E", "right", 61.0, 7.0, _OUTER, _OUTER, radius=LANE),
    VehiclePlan("N", "right", 73.0, 7.0, _OUTER, _OUTER, radius=LANE),
)


def generate_t_junction(**kw) -> ScenarioSpec:
    return build_spec(T_JUNCTION, "t-junction", **kw)


def generate_intersection(N: int = 12, **kw) -> ScenarioSpec:
    if not 2 <= N <= len(INTERSECTION):
        raise ValueError(f"intersection supports 2..{len(INTERSECTION)} vehicles, got {N}")
    return build_spec(INTERSECTION[:N], f"intersection-{N}", **kw)


def builtin(name: str, **kw) -> ScenarioSpec:
    """Resolve 't-junction' or 'intersection[:N]'."""
    if name == "t-junction":
        return generate_t_junction(**kw)
    if name.startswith("intersection"):
        _, _, n = name.partition(":")
        return generate_intersection(int(n) if n else 12, **kw)
    raise ValueError(f"unknown builtin scenario {name!r}")
