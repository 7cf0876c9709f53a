"""Smooth-turn mobility: straight segments and constant-radius arcs.

Each UAV alternates between maneuvers. A maneuver has a curvature drawn from
a zero-mean normal (truncated at the minimum turn radius; zero curvature means
straight flight) and an exponentially distributed duration. Altitude is held
constant and region boundaries reflect the heading specularly, which preserves
node density inside the box.
"""

import math
from dataclasses import dataclass


@dataclass
class StParams:
    curvature_stddev: float = 1.0 / 2000.0   # 1/m
    mean_maneuver_duration: float = 10.0     # s
    speed: float = 180.0                     # m/s
    r_min: float = 300.0                     # m, minimum turn radius

    def validate(self):
        if self.curvature_stddev < 0:
            raise ValueError("curvature_stddev must be >= 0")
        if self.mean_maneuver_duration <= 0 or self.speed <= 0 or self.r_min <= 0:
            raise ValueError("maneuver duration, speed and r_min must be positive")


@dataclass
class StState:
    heading: float = 0.0        # radians
    curvature: float = 0.0      # 1/m, 0 = straight
    maneuver_end: float = 0.0   # sim time s


def sample_maneuver(rng, params, now):
    """Draw the next (curvature, end-time) pair for a maneuver starting now."""
    kappa_max = 1.0 / params.r_min
    if params.curvature_stddev == 0.0:
        kappa = 0.0
    else:
        kappa = rng.gauss(0.0, params.curvature_stddev)
        while abs(kappa) > kappa_max:
            kappa = rng.gauss(0.0, params.curvature_stddev)
    duration = rng.expovariate(1.0 / params.mean_maneuver_duration)
    return kappa, now + duration


def step(position, heading, curvature, speed, dt, region):
    """Advance one tick along a circular arc (straight when curvature is 0).

    Returns (position, heading). On boundary contact the heading reflects and
    the position is folded back inside the region; altitude never changes.
    """
    x, y, z = position
    if curvature == 0.0:
        x += speed * dt * math.cos(heading)
        y += speed * dt * math.sin(heading)
        new_heading = heading
    else:
        new_heading = heading + speed * dt * curvature
        inv = 1.0 / curvature
        x += (math.sin(new_heading) - math.sin(heading)) * inv
        y += (math.cos(heading) - math.cos(new_heading)) * inv

    # Specular reflection off the box walls. One displacement step is far
    # smaller than the region, but loop in case of a corner graze.
    for _ in range(4):
        moved = False
        if x < region.xmin:
            x = 2.0 * region.xmin - x
            new_heading = math.pi - new_heading
            moved = True
        elif x > region.xmax:
            x = 2.0 * region.xmax - x
            new_heading = math.pi - new_heading
            moved = True
        if y < region.ymin:
            y = 2.0 * region.ymin - y
            new_heading = -new_heading
            moved = True
        elif y > region.ymax:
            y = 2.0 * region.ymax - y
            new_heading = -new_heading
            moved = True
        if not moved:
            break
    # Guard against float residue on exact-boundary hits.
    x = min(max(x, region.xmin), region.xmax)
    y = min(max(y, region.ymin), region.ymax)
    return (x, y, z), new_heading
