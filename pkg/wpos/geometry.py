"""
Sensor space, target space and the polar zone partition.

The sensor space is an axis-aligned box centred at the origin; the target
space is a vertical cylinder around it. Targets are drawn uniformly from the
cylinder volume outside the box, and each target is labelled with the planar
annular sector (zone) that contains it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s
MIN_ACCEPTANCE = 1e-6

Point = Tuple[float, float, float]


@dataclass(frozen=True)
class SceneConfig:
    """Sensor-space box, target-space cylinder and sensor placement (meters)."""

    d_x: float = 6.0
    d_y: float = 3.0
    d_z: float = 2.0
    d_r: float = 10.0
    d_h: float = 4.0
    M: int = 12
    sensor_locations: Optional[Tuple[Point, ...]] = None
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        for name in ("d_x", "d_y", "d_z", "d_r", "d_h", "c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if not self.d_h > self.d_z:
            raise ValueError("target height d_h must exceed sensor box height d_z")
        if not self.d_r > math.hypot(self.d_x / 2, self.d_y / 2):
            raise ValueError("target radius d_r must exceed the sensor box half-diagonal")

        if self.sensor_locations is None:
            locations = default_sensor_positions(self)
        else:
            locations = tuple(tuple(float(v) for v in point) for point in self.sensor_locations)
        if len(locations) != self.M:
            raise ValueError(f"expected {self.M} sensor locations, got {len(locations)}")
        for point in locations:
            if len(point) != 3:
                raise ValueError(f"sensor location must be 3-D: {point!r}")
            if not self.inside_box(point):
                raise ValueError(f"sensor location outside the sensor space: {point!r}")
        object.__setattr__(self, "sensor_locations", locations)

    @property
    def sensors(self) -> np.ndarray:
        """Sensor positions as an (M, 3) array."""
        return np.asarray(self.sensor_locations, dtype=float)

    @property
    def c_m_per_ns(self) -> float:
        return self.c * 1e-9

    def inside_box(self, point: Sequence[float], tol: float = 1e-9) -> bool:
        x, y, z = point
        return (
            abs(x) <= self.d_x / 2 + tol
            and abs(y) <= self.d_y / 2 + tol
            and abs(z) <= self.d_z / 2 + tol
        )


@dataclass(frozen=True)
class ZoneLayout:
    """Equal-width rings over [0, d_r] times equal-angle sectors over [0, 2*pi)."""

    n_rings: int = 2
    n_sectors: int = 4
    d_r: float = 10.0

    def __post_init__(self):
        if self.n_rings < 1 or self.n_sectors < 1:
            raise ValueError("zone layout needs at least one ring and one sector")
        if not self.d_r > 0:
            raise ValueError("d_r must be positive")

    @classmethod
    def for_zones(cls, n_zones: int, d_r: float) -> "ZoneLayout":
        """Default factorisations: 8 -> 2x4, 32 -> 4x8."""
        defaults = {8: (2, 4), 32: (4, 8)}
        if n_zones not in defaults:
            raise ValueError(f"no default ring/sector factorisation for N_z={n_zones}")
        rings, sectors = defaults[n_zones]
        return cls(n_rings=rings, n_sectors=sectors, d_r=d_r)

    @property
    def n_zones(self) -> int:
        return self.n_rings * self.n_sectors

    @property
    def ring_bounds(self) -> Tuple[float, ...]:
        return tuple(self.d_r * (i + 1) / self.n_rings for i in range(self.n_rings))

    @property
    def sector_bounds(self) -> Tuple[float, ...]:
        return tuple(2 * math.pi * (j + 1) / self.n_sectors for j in range(self.n_sectors))

    def zone_area(self, zone: int) -> float:
        ring = zone // self.n_sectors
        inner = self.d_r * ring / self.n_rings
        outer = self.d_r * (ring + 1) / self.n_rings
        return math.pi * (outer ** 2 - inner ** 2) / self.n_sectors


def default_sensor_positions(scene: SceneConfig) -> Tuple[Point, ...]:
    """Eight box corners followed by the four side-face centres at z=0."""
    if scene.M != 12:
        raise ValueError(f"default sensor placement needs M=12 (got M={scene.M}); give explicit positions")
    hx, hy, hz = scene.d_x / 2, scene.d_y / 2, scene.d_z / 2
    corners = [
        (sx * hx, sy * hy, sz * hz)
        for sz in (-1.0, 1.0)
        for sy in (-1.0, 1.0)
        for sx in (-1.0, 1.0)
    ]
    faces = [(hx, 0.0, 0.0), (0.0, hy, 0.0), (-hx, 0.0, 0.0), (0.0, -hy, 0.0)]
    return tuple(corners + faces)


def distances(point: Sequence[float], sensors: np.ndarray) -> np.ndarray:
    """Euclidean distances d_m from a point to each sensor."""
    return np.linalg.norm(np.asarray(sensors, dtype=float) - np.asarray(point, dtype=float), axis=-1)


def target_acceptance(scene: SceneConfig) -> float:
    """Probability that a uniform cylinder point falls outside the sensor box."""
    box = scene.d_x * scene.d_y * scene.d_z
    cylinder = math.pi * scene.d_r ** 2 * scene.d_h
    return max(0.0, 1.0 - box / cylinder)


def sample_cylinder(d_r: float, d_h: float, rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform points in a vertical cylinder centred at the origin, shape (n, 3)."""
    radius = d_r * np.sqrt(rng.random(n))
    angle = 2 * np.pi * rng.random(n)
    z = (rng.random(n) - 0.5) * d_h
    return np.column_stack((radius * np.cos(angle), radius * np.sin(angle), z))


def sample_target_locations(scene: SceneConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    """Rejection-sample n targets from the cylinder minus the sensor box."""
    acceptance = target_acceptance(scene)
    if acceptance < MIN_ACCEPTANCE:
        raise ValueError(f"target space is degenerate (acceptance {acceptance:.3g})")
    if n <= 0:
        return np.empty((0, 3))

    hx, hy, hz = scene.d_x / 2, scene.d_y / 2, scene.d_z / 2
    accepted = []
    have = 0
    while have < n:
        batch = int(math.ceil((n - have) / acceptance * 1.1)) + 16
        points = sample_cylinder(scene.d_r, scene.d_h, rng, batch)
        inside = (np.abs(points[:, 0]) <= hx) & (np.abs(points[:, 1]) <= hy) & (np.abs(points[:, 2]) <= hz)
        points = points[~inside]
        accepted.append(points)
        have += len(points)
    return np.concatenate(accepted)[:n]


def sample_target_location(scene: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    return sample_target_locations(scene, rng, 1)[0]


def zones_of(layout: ZoneLayout, points: np.ndarray) -> np.ndarray:
    """Vectorised zone_of over an (n, 3) or (n, 2) array."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    radius = np.hypot(points[:, 0], points[:, 1])
    if np.any(radius > layout.d_r * (1 + 1e-12)):
        worst = float(radius.max())
        raise ValueError(f"point outside target radius: r={worst:.6g} > d_r={layout.d_r}")
    ring = np.minimum((radius / (layout.d_r / layout.n_rings)).astype(int), layout.n_rings - 1)
    angle = np.mod(np.arctan2(points[:, 1], points[:, 0]), 2 * np.pi)
    sector = np.minimum((angle / (2 * np.pi / layout.n_sectors)).astype(int), layout.n_sectors - 1)
    return ring * layout.n_sectors + sector


def zone_of(layout: ZoneLayout, point: Sequence[float]) -> int:
    """Zone index of a point; z is ignored."""
    return int(zones_of(layout, np.asarray(point, dtype=float)[None, :])[0])
