"""Manhattan-type city synthesis and line-of-sight queries.

Cities are built on a uniform square grid: a fixed fraction of cells carry
one axis-aligned building each (a centered sub-square of the cell, so streets
remain between blocks), with Rayleigh-distributed heights. Sensor nodes are
dropped uniformly on building-free cells. Visibility between a UAV and a
ground node is an exact segment/box intersection test, and sweeping many
random cities yields an empirical LoS-probability table over elevation
angles.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

# Fraction of a grid cell's side covered by its building (streets fill the rest).
BUILDING_FILL = 0.8

# Endpoint exclusion tolerance for the segment/box test, in meters.
ENDPOINT_TOL = 1e-9

# Sweep grids used when sampling LoS probability over city ensembles.
SWEEP_ELEVATIONS_DEG = np.arange(5.0, 91.0, 5.0)
SWEEP_AZIMUTHS_DEG = np.arange(0.0, 360.0, 30.0)
SWEEP_ALTITUDES_M = np.arange(30.0, 301.0, 30.0)


class CityError(ValueError):
    """Raised for invalid city parameters or unsatisfiable placement requests."""


@dataclass(frozen=True)
class Building:
    """One axis-aligned building: ground footprint rectangle plus height."""

    footprint_min: tuple[float, float]
    footprint_max: tuple[float, float]
    height: float

    def __post_init__(self):
        if not (self.footprint_min[0] < self.footprint_max[0]
                and self.footprint_min[1] < self.footprint_max[1]):
            raise CityError("building footprint_min must be < footprint_max componentwise")
        if not self.height > 0:
            raise CityError("building height must be positive")


@dataclass(frozen=True)
class CityParams:
    """Knobs for random city synthesis."""

    area_side: float = 300.0
    grid_cell: float = 30.0
    built_fraction: float = 0.3
    rayleigh_scale: float = 20.0
    height_cap: float = 100.0

    def __post_init__(self):
        if self.area_side <= 0 or self.grid_cell <= 0:
            raise CityError("area_side and grid_cell must be positive")
        if not 0.0 < self.built_fraction < 1.0:
            raise CityError("built_fraction must lie strictly inside (0, 1)")
        if self.rayleigh_scale <= 0:
            raise CityError("rayleigh_scale must be positive")
        if self.height_cap <= 0:
            raise CityError("height_cap must be positive")
        if int(self.area_side // self.grid_cell) < 1:
            raise CityError("area must hold at least one grid cell")

    @property
    def cells_per_side(self) -> int:
        return int(self.area_side // self.grid_cell)


@dataclass(frozen=True)
class CityRealization:
    """A concrete random city: buildings on disjoint grid cells.

    Immutable after construction; safe to share across threads. The stacked
    box arrays used by the visibility tests are cached on first use.
    """

    area_side: float
    grid_cell: float
    buildings: tuple[Building, ...]
    rng_seed: int

    @cached_property
    def _boxes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self.buildings:
            empty = np.empty((0, 2))
            return empty, empty, np.empty((0,))
        lo = np.array([b.footprint_min for b in self.buildings])
        hi = np.array([b.footprint_max for b in self.buildings])
        h = np.array([b.height for b in self.buildings])
        return lo, hi, h

    @property
    def cells_per_side(self) -> int:
        return int(self.area_side // self.grid_cell)

    def occupied_cells(self) -> set[tuple[int, int]]:
        """Grid indices (ix, iy) of cells carrying a building."""
        g = self.grid_cell
        out = set()
        for b in self.buildings:
            cx = 0.5 * (b.footprint_min[0] + b.footprint_max[0])
            cy = 0.5 * (b.footprint_min[1] + b.footprint_max[1])
            out.add((int(cx // g), int(cy // g)))
        return out

    def to_json(self) -> str:
        doc = {
            "area_side": self.area_side,
            "grid_cell": self.grid_cell,
            "rng_seed": self.rng_seed,
            "buildings": [
                {"min": list(b.footprint_min), "max": list(b.footprint_max),
                 "height": b.height}
                for b in self.buildings
            ],
        }
        return json.dumps(doc, indent=2)

    @staticmethod
    def from_json(text: str) -> "CityRealization":
        doc = json.loads(text)
        buildings = tuple(
            Building(tuple(b["min"]), tuple(b["max"]), b["height"])
            for b in doc["buildings"]
        )
        return CityRealization(doc["area_side"], doc["grid_cell"], buildings,
                               doc["rng_seed"])


@dataclass(frozen=True)
class LosSampleTable:
    """Empirical LoS probability per elevation bin, pooled over a sweep."""

    elevation_deg: tuple[float, ...]
    p_los: tuple[float, ...]
    sample_count: tuple[int, ...]

    def __post_init__(self):
        for theta, p, n in zip(self.elevation_deg, self.p_los, self.sample_count):
            if not 0.0 < theta <= 90.0:
                raise CityError("elevation bins must lie in (0, 90] degrees")
            if not 0.0 <= p <= 1.0:
                raise CityError("empirical probabilities must lie in [0, 1]")
            if n <= 0:
                raise CityError("sample_count must be positive")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["elevation_deg", "p_los", "n"])
            for theta, p, n in zip(self.elevation_deg, self.p_los, self.sample_count):
                writer.writerow([repr(float(theta)), repr(float(p)), n])

    @staticmethod
    def from_csv(path) -> "LosSampleTable":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return LosSampleTable(
            tuple(float(r["elevation_deg"]) for r in rows),
            tuple(float(r["p_los"]) for r in rows),
            tuple(int(r["n"]) for r in rows),
        )

    def to_json(self) -> str:
        return json.dumps({
            "elevation_deg": list(self.elevation_deg),
            "p_los": list(self.p_los),
            "sample_count": list(self.sample_count),
        }, indent=2)

    @staticmethod
    def from_json(text: str) -> "LosSampleTable":
        doc = json.loads(text)
        return LosSampleTable(tuple(doc["elevation_deg"]), tuple(doc["p_los"]),
                              tuple(doc["sample_count"]))


def _cell_origin(idx: int, side: int, cell: float) -> tuple[float, float]:
    return (idx % side) * cell, (idx // side) * cell


def generate_city(params: CityParams, seed: int,
                  keep_clear: Sequence[Sequence[float]] = ()) -> CityRealization:
    """Draw one random city: occupied cells, footprints, Rayleigh heights.

    ``keep_clear`` lists ground points whose grid cells must stay free of
    buildings (used to keep pre-placed sensors on open ground); the requested
    number of buildings is still placed on the remaining cells.
    """
    rng = np.random.default_rng(seed)
    side = params.cells_per_side
    n_cells = side * side
    n_built = int(round(params.built_fraction * n_cells))

    blocked = set()
    for px, py in keep_clear:
        ix = min(int(px // params.grid_cell), side - 1)
        iy = min(int(py // params.grid_cell), side - 1)
        blocked.add(iy * side + ix)
    candidates = np.array([i for i in range(n_cells) if i not in blocked])
    if n_built > candidates.size:
        raise CityError("not enough free cells left after keep_clear exclusions")

    chosen = rng.choice(candidates, size=n_built, replace=False)
    chosen.sort()

    heights = rng.rayleigh(params.rayleigh_scale, size=n_built)
    # Truncate at the cap by redrawing (also covers the measure-zero 0 draw).
    bad = (heights > params.height_cap) | (heights <= 0)
    while np.any(bad):
        heights[bad] = rng.rayleigh(params.rayleigh_scale, size=int(bad.sum()))
        bad = (heights > params.height_cap) | (heights <= 0)

    margin = 0.5 * (1.0 - BUILDING_FILL) * params.grid_cell
    span = BUILDING_FILL * params.grid_cell
    buildings = []
    for idx, h in zip(chosen, heights):
        ox, oy = _cell_origin(int(idx), side, params.grid_cell)
        buildings.append(Building(
            (ox + margin, oy + margin),
            (ox + margin + span, oy + margin + span),
            float(h),
        ))
    return CityRealization(params.area_side, params.grid_cell, tuple(buildings), seed)


def place_sensors(city: CityRealization, K: int, seed: int) -> np.ndarray:
    """Drop K sensors uniformly on building-free grid cells; returns (K, 2)."""
    if K < 1:
        raise CityError("K must be at least 1")
    side = city.cells_per_side
    occupied = city.occupied_cells()
    free = [(ix, iy) for iy in range(side) for ix in range(side)
            if (ix, iy) not in occupied]
    if len(free) < K:
        raise CityError(f"only {len(free)} free cells available for {K} sensors")

    rng = np.random.default_rng(seed)
    cells = rng.integers(0, len(free), size=K)
    offsets = rng.uniform(0.0, city.grid_cell, size=(K, 2))
    points = np.empty((K, 2))
    for i, (c, off) in enumerate(zip(cells, offsets)):
        ix, iy = free[int(c)]
        points[i] = (ix * city.grid_cell + off[0], iy * city.grid_cell + off[1])
    return points


def _segments_blocked(city: CityRealization, p0: np.ndarray, p1: np.ndarray) -> np.ndarray:
    """Slab-method segment/AABB test, vectorized over queries and boxes.

    ``p0``/``p1`` have shape (Q, 3). Returns a boolean (Q,) array that is True
    where the open segment (endpoints excluded, tolerance ENDPOINT_TOL meters)
    intersects at least one building box.
    """
    lo2d, hi2d, heights = city._boxes
    if heights.size == 0:
        return np.zeros(p0.shape[0], dtype=bool)

    box_lo = np.concatenate([lo2d, np.zeros((heights.size, 1))], axis=1)
    box_hi = np.concatenate([hi2d, heights[:, None]], axis=1)

    d = p1 - p0                                     # (Q, 3)
    length = np.linalg.norm(d, axis=1)              # (Q,)
    degenerate = length < ENDPOINT_TOL

    # Broadcast to (Q, M, 3). Guard zero direction components with +/- inf.
    p0b = p0[:, None, :]
    db = d[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_lo = (box_lo[None, :, :] - p0b) / db
        t_hi = (box_hi[None, :, :] - p0b) / db
    near = np.minimum(t_lo, t_hi)
    far = np.maximum(t_lo, t_hi)

    # Axes with ~zero direction: inside the slab -> unrestricted, else miss.
    zero = np.abs(db) < 1e-15
    inside = (p0b >= box_lo[None, :, :]) & (p0b <= box_hi[None, :, :])
    near = np.where(zero, np.where(inside, -np.inf, np.inf), near)
    far = np.where(zero, np.where(inside, np.inf, -np.inf), far)

    t_enter = near.max(axis=2)                      # (Q, M)
    t_exit = far.min(axis=2)

    t_tol = np.where(degenerate, 0.5, ENDPOINT_TOL / np.maximum(length, ENDPOINT_TOL))
    hit = (t_exit >= t_enter) \
        & (np.maximum(t_enter, t_tol[:, None]) <= np.minimum(t_exit, 1.0 - t_tol[:, None]))
    hit &= ~degenerate[:, None]
    return hit.any(axis=1)


def los_visible(city: CityRealization, uav: Sequence[float], sn: Sequence[float]) -> bool:
    """True iff the UAV-to-sensor segment misses every building volume."""
    p0 = np.asarray(uav, dtype=float).reshape(1, 3)
    p1 = np.asarray(sn, dtype=float).reshape(1, 3)
    return not bool(_segments_blocked(city, p0, p1)[0])


def los_visible_batch(city: CityRealization, uavs: np.ndarray, sns: np.ndarray) -> np.ndarray:
    """Vectorized ``los_visible`` for (Q, 3) UAV and sensor position arrays."""
    uavs = np.asarray(uavs, dtype=float)
    sns = np.asarray(sns, dtype=float)
    return ~_segments_blocked(city, uavs, sns)


def sample_los_probability(params: CityParams, n_cities: int, seed: int) -> LosSampleTable:
    """Empirical LoS probability per elevation angle over a city ensemble.

    For every random city one sensor is placed on free ground; the UAV is
    swept over all (altitude, elevation, azimuth) combinations on the fixed
    grids, with the horizontal offset chosen so the sensor is seen under the
    requested elevation angle. Counts are pooled into elevation bins across
    altitudes and azimuths.
    """
    if n_cities < 1:
        raise CityError("n_cities must be at least 1")

    elevs = SWEEP_ELEVATIONS_DEG
    azims = np.radians(SWEEP_AZIMUTHS_DEG)
    alts = SWEEP_ALTITUDES_M

    # Horizontal range to the sensor for each (altitude, elevation); exactly 0
    # at 90 degrees so the ray is vertical.
    tan_e = np.tan(np.radians(elevs))
    ranges = alts[:, None] / tan_e[None, :]
    ranges[:, elevs >= 90.0] = 0.0

    # UAV offsets relative to the sensor, flattened to (A*E*Z, 3) with the
    # elevation index recoverable from the layout.
    dir_xy = np.stack([np.cos(azims), np.sin(azims)], axis=1)           # (A, 2)
    off_xy = ranges[:, :, None, None] * dir_xy[None, None, :, :]        # (Z, E, A, 2)
    off_z = np.broadcast_to(alts[:, None, None], ranges.shape + (azims.size,))
    offsets = np.concatenate([off_xy, off_z[..., None]], axis=3).reshape(-1, 3)
    elev_idx = np.broadcast_to(np.arange(elevs.size)[None, :, None],
                               (alts.size, elevs.size, azims.size)).reshape(-1)

    hits = np.zeros(elevs.size, dtype=np.int64)
    totals = np.zeros(elevs.size, dtype=np.int64)
    seq = np.random.SeedSequence(seed)
    for child in seq.spawn(n_cities):
        city_seed, sensor_seed = child.generate_state(2)
        city = generate_city(params, int(city_seed))
        sn = place_sensors(city, 1, int(sensor_seed))[0]
        sn3 = np.array([sn[0], sn[1], 0.0])
        uavs = sn3[None, :] + offsets
        vis = los_visible_batch(city, uavs, np.broadcast_to(sn3, uavs.shape))
        hits += np.bincount(elev_idx, weights=vis, minlength=elevs.size).astype(np.int64)
        totals += np.bincount(elev_idx, minlength=elevs.size)

    return LosSampleTable(
        tuple(float(e) for e in elevs),
        tuple(float(h) / float(t) for h, t in zip(hits, totals)),
        tuple(int(t) for t in totals),
    )
