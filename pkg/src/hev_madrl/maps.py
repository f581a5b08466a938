"""Quasi-static component maps: engine fuel rate and motor efficiency grids.

Map file layout (plain text, whitespace separated)::

    # kind: fuel_rate_g_per_s
    torque\\speed  800   1050  ...      <- first row: speed grid (rpm)
    0.0           0.05  0.06  ...      <- first column: torque grid (Nm)
    10.0          ...

Lines starting with ``#`` are comments; a ``# kind:`` comment is kept as
metadata. The top-left cell is a label and is ignored.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import MapError

FUEL_KIND = "fuel_rate_g_per_s"
EFFICIENCY_KIND = "efficiency"

RPM_TO_RAD_S = 2.0 * math.pi / 60.0


@dataclass(frozen=True)
class EfficiencyMap:
    """A 2-D table indexed by (speed in rpm, torque in Nm).

    ``values[j, i]`` is the value at ``torque_grid[j]``, ``speed_grid[i]``.
    """

    speed_grid: np.ndarray
    torque_grid: np.ndarray
    values: np.ndarray
    kind: str = EFFICIENCY_KIND
    _s: list = field(init=False, repr=False, compare=False)
    _t: list = field(init=False, repr=False, compare=False)
    _v: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        speed = np.asarray(self.speed_grid, dtype=float)
        torque = np.asarray(self.torque_grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if speed.ndim != 1 or torque.ndim != 1 or len(speed) < 2 or len(torque) < 2:
            raise MapError("grids must be 1-D with at least two points")
        if np.any(np.diff(speed) <= 0) or np.any(np.diff(torque) <= 0):
            raise MapError("grids must be strictly increasing")
        if values.shape != (len(torque), len(speed)):
            raise MapError(
                f"value grid shape {values.shape} does not match "
                f"(len(torque_grid), len(speed_grid)) = {(len(torque), len(speed))}"
            )
        if not np.all(np.isfinite(values)):
            raise MapError("map values must be finite")
        if self.kind == EFFICIENCY_KIND:
            if np.any(values <= 0.0) or np.any(values > 1.0):
                raise MapError("efficiencies must lie in (0, 1]")
        elif self.kind == FUEL_KIND:
            if np.any(values < 0.0):
                raise MapError("fuel rates must be non-negative")
        else:
            raise MapError(f"unknown map kind {self.kind!r}")
        object.__setattr__(self, "speed_grid", speed)
        object.__setattr__(self, "torque_grid", torque)
        object.__setattr__(self, "values", values)
        # plain lists keep scalar lookups cheap inside the simulation loop
        object.__setattr__(self, "_s", speed.tolist())
        object.__setattr__(self, "_t", torque.tolist())
        object.__setattr__(self, "_v", values.tolist())

    def __call__(self, speed: float, torque: float) -> float:
        return map_lookup(self, speed, torque)


def _cell(grid: list, x: float) -> tuple[int, float]:
    if x <= grid[0]:
        return 0, 0.0
    if x >= grid[-1]:
        return len(grid) - 2, 1.0
    i = bisect_right(grid, x) - 1
    return i, (x - grid[i]) / (grid[i + 1] - grid[i])


def map_lookup(table: EfficiencyMap, speed: float, torque: float) -> float:
    """Bilinear interpolation; queries outside the grid clamp to the boundary."""
    i, fs = _cell(table._s, speed)
    j, ft = _cell(table._t, torque)
    v = table._v
    lo = v[j][i] + fs * (v[j][i + 1] - v[j][i])
    hi = v[j + 1][i] + fs * (v[j + 1][i + 1] - v[j + 1][i])
    return lo + ft * (hi - lo)


def load_map(path, kind: str | None = None) -> EfficiencyMap:
    text = Path(path).read_text()
    return parse_map(text, kind=kind, source=str(path))


def parse_map(text: str, kind: str | None = None, source: str = "<string>") -> EfficiencyMap:
    declared = None
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.lower().startswith("kind:"):
                declared = body.split(":", 1)[1].strip()
            continue
        rows.append(line.split())
    if len(rows) < 3:
        raise MapError(f"{source}: need a speed row and at least two torque rows")
    try:
        speed = [float(x) for x in rows[0][1:]]
        torque = [float(r[0]) for r in rows[1:]]
        values = [[float(x) for x in r[1:]] for r in rows[1:]]
    except ValueError as exc:
        raise MapError(f"{source}: non-numeric entry ({exc})") from None
    if any(len(r) != len(speed) for r in values):
        raise MapError(f"{source}: ragged value rows")
    map_kind = kind or declared or EFFICIENCY_KIND
    if kind and declared and kind != declared:
        raise MapError(f"{source}: file declares kind {declared!r}, expected {kind!r}")
    return EfficiencyMap(np.array(speed), np.array(torque), np.array(values), kind=map_kind)


def format_map(table: EfficiencyMap) -> str:
    lines = [f"# kind: {table.kind}", "torque\\speed " + " ".join(repr(float(s)) for s in table.speed_grid)]
    for t, row in zip(table.torque_grid, table.values):
        lines.append(repr(float(t)) + " " + " ".join(repr(float(x)) for x in row))
    return "\n".join(lines) + "\n"


def save_map(table: EfficiencyMap, path) -> None:
    Path(path).write_text(format_map(table))


# ---------------------------------------------------------------------------
# Synthetic maps shipped with the package. They are physically plausible,
# not measured data.


def synthesize_engine_map(
    speed_grid=None,
    torque_grid=None,
    heat_value_kj_per_g: float = 43.5,
    peak_indicated_eff: float = 0.39,
    best_speed: float = 2200.0,
) -> EfficiencyMap:
    """Willans-line fuel map with a best-efficiency island (about 36 % brake)."""
    speed = np.linspace(800.0, 4800.0, 17) if speed_grid is None else np.asarray(speed_grid, float)
    torque = np.linspace(0.0, 160.0, 17) if torque_grid is None else np.asarray(torque_grid, float)
    n, t = np.meshgrid(speed, torque)
    friction = 8.0 + 0.002 * np.maximum(n - 1000.0, 0.0)
    indicated = (
        peak_indicated_eff
        - 0.05 * ((n - best_speed) / 2000.0) ** 2
        - 0.03 * (t / 155.0 - 0.8) ** 2
    )
    shaft = n * RPM_TO_RAD_S * (t + friction)
    fuel = shaft / (indicated * heat_value_kj_per_g * 1000.0)
    return EfficiencyMap(speed, torque, np.round(fuel, 6), kind=FUEL_KIND)


def synthesize_motor_map(
    t_max: float,
    n_max: float,
    peak: float = 0.95,
    speed_points: int = 25,
    torque_points: int = 15,
) -> EfficiencyMap:
    """Motor/generator efficiency over |torque|, peaking at ``peak``."""
    speed = np.linspace(0.0, n_max, speed_points)
    torque = np.linspace(0.0, t_max, torque_points)
    n, t = np.meshgrid(speed, torque)
    eta = (
        peak
        - 0.15 * np.exp(-n / 1200.0)
        - 0.12 * np.exp(-t / (0.15 * t_max))
        - 0.04 * ((n - 0.45 * n_max) / (0.55 * n_max)) ** 2
    )
    eta = np.clip(eta, 0.60, peak)
    return EfficiencyMap(speed, torque, np.round(eta, 6), kind=EFFICIENCY_KIND)


def default_maps() -> dict[str, EfficiencyMap]:
    """The shipped map files (engine, MG1, MG2)."""
    data = resources.files("hev_madrl") / "data"
    return {
        "engine": parse_map((data / "engine_fuel.txt").read_text(), kind=FUEL_KIND),
        "mg1": parse_map((data / "mg1_efficiency.txt").read_text(), kind=EFFICIENCY_KIND),
        "mg2": parse_map((data / "mg2_efficiency.txt").read_text(), kind=EFFICIENCY_KIND),
    }


def write_default_maps(directory) -> None:
    """Regenerate the shipped map files."""
    directory = Path(directory)
    save_map(synthesize_engine_map(), directory / "engine_fuel.txt")
    save_map(synthesize_motor_map(t_max=120.0, n_max=6000.0), directory / "mg1_efficiency.txt")
    save_map(synthesize_motor_map(t_max=280.0, n_max=12000.0), directory / "mg2_efficiency.txt")
