"""1 Hz drive cycles and the shuffled four-phase learning cycle.

Trace file format: one velocity per line (``;`` or ``,`` also separate
values), optional header comments::

    # units: kmh        (or mps, the default)
    # source: UDDS
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
import re

import numpy as np

from .errors import NonPositiveDuration, ParseError, VelocityOutOfRange

KMH = 1.0 / 3.6


class CycleSource(str, Enum):
    ARTEMIS_RURAL = "ArtemisRural"
    RTS95 = "RTS95"
    UDDS = "UDDS"
    WLTP = "WLTP"
    COMPOSITE = "Composite"
    CUSTOM = "Custom"


@dataclass(frozen=True)
class DriveCycle:
    name: str
    samples: np.ndarray  # m/s at dt spacing
    source: CycleSource = CycleSource.CUSTOM
    dt: float = 1.0
    accel_limit: float = 5.0  # m/s^2 sanity bound
    _v: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        v = np.array(self.samples, dtype=float)
        if v.ndim != 1 or len(v) < 2:
            raise NonPositiveDuration(f"cycle {self.name!r} needs at least two samples")
        if not np.all(np.isfinite(v)):
            raise VelocityOutOfRange(f"cycle {self.name!r} has non-finite samples")
        if np.any(v < 0.0):
            raise VelocityOutOfRange(f"cycle {self.name!r} has negative velocity")
        peak = np.max(np.abs(np.diff(v))) / self.dt
        if peak > self.accel_limit + 1e-9:
            raise VelocityOutOfRange(
                f"cycle {self.name!r} acceleration {peak:.2f} m/s^2 exceeds {self.accel_limit}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "samples", v)
        object.__setattr__(self, "source", CycleSource(self.source))
        object.__setattr__(self, "_v", v.tolist())

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) * self.dt

    def speed(self, k: int) -> float:
        return self._v[k]

    def accel(self, k: int) -> float:
        """Forward difference; the final sample holds its speed."""
        if k >= len(self._v) - 1:
            return 0.0
        return (self._v[k + 1] - self._v[k]) / self.dt

    @property
    def accelerations(self) -> np.ndarray:
        a = np.zeros_like(self.samples)
        a[:-1] = np.diff(self.samples) / self.dt
        return a

    @property
    def distance(self) -> float:
        return float(np.sum(self.samples) * self.dt)

    def summary(self) -> dict:
        return {
            "name": self.name,
            "source": self.source.value,
            "samples": len(self),
            "duration_s": self.duration,
            "distance_m": round(self.distance, 3),
            "mean_speed_mps": round(float(np.mean(self.samples)), 4),
            "max_speed_mps": round(float(np.max(self.samples)), 4),
            "max_accel_mps2": round(float(np.max(self.accelerations)), 4),
            "min_accel_mps2": round(float(np.min(self.accelerations)), 4),
        }


_SPLIT = re.compile(r"[;,\s]+")


def parse_cycle(text: str, name: str = "custom", accel_limit: float = 5.0) -> DriveCycle:
    units = "mps"
    source = CycleSource.CUSTOM
    values = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            key, val = key.strip().lower(), val.strip()
            if key == "units":
                if val.lower() not in ("kmh", "mps"):
                    raise ParseError(f"line {lineno}: unknown units {val!r}")
                units = val.lower()
            elif key == "source":
                try:
                    source = CycleSource(val)
                except ValueError:
                    raise ParseError(f"line {lineno}: unknown source {val!r}") from None
            continue
        for tok in _SPLIT.split(line):
            if not tok:
                continue
            try:
                values.append(float(tok))
            except ValueError:
                raise ParseError(f"line {lineno}: cannot parse {tok!r}") from None
    v = np.array(values, dtype=float)
    if units == "kmh":
        v = v * KMH
    return DriveCycle(name, v, source=source, accel_limit=accel_limit)


def load_cycle(path, accel_limit: float = 5.0) -> DriveCycle:
    path = Path(path)
    return parse_cycle(path.read_text(), name=path.stem, accel_limit=accel_limit)


def format_cycle(cycle: DriveCycle, units: str = "mps") -> str:
    scale = 3.6 if units == "kmh" else 1.0
    lines = [f"# units: {units}", f"# source: {cycle.source.value}"]
    lines += [repr(float(x * scale)) for x in cycle.samples]
    return "\n".join(lines) + "\n"


def save_cycle(cycle: DriveCycle, path, units: str = "mps") -> None:
    Path(path).write_text(format_cycle(cycle, units))


# ---------------------------------------------------------------------------
# Built-in traces. The official speed tables are not redistributed here; the
# built-ins are synthetic stand-ins that mimic each cycle's speed envelope
# (rural low-speed, aggressive accelerations, urban stop-and-go, highway).
# Load real traces with ``load_cycle`` for anything quantitative.

BUILTIN = {
    "artemis_rural": ("artemis_rural_synthetic.txt", CycleSource.ARTEMIS_RURAL),
    "rts95": ("rts95_synthetic.txt", CycleSource.RTS95),
    "udds": ("udds_synthetic.txt", CycleSource.UDDS),
    "wltp": ("wltp_synthetic.txt", CycleSource.WLTP),
}

# (target km/h, seconds to reach it); holds are repeated targets
_SEGMENTS = {
    "artemis_rural": [
        (0, 4), (18, 6), (32, 8), (38, 14), (30, 6), (42, 10), (42, 12), (25, 8), (12, 6), (0, 6), (0, 5),
        (30, 10), (55, 12), (70, 10), (78, 30), (65, 10), (85, 14), (85, 40), (70, 12), (50, 12),
        (62, 10), (62, 30), (40, 12), (0, 12), (0, 6),
        (35, 10), (60, 12), (80, 14), (88, 50), (72, 12), (90, 14), (90, 40), (60, 14), (30, 12), (0, 10), (0, 8),
    ],
    "rts95": [
        (0, 5), (30, 4), (60, 7), (80, 5), (80, 6), (40, 7), (0, 7), (0, 6),
        (35, 4), (70, 8), (100, 9), (110, 8), (110, 10), (60, 9), (0, 10), (0, 6),
        (40, 5), (75, 7), (75, 15), (50, 6), (85, 9), (85, 12), (30, 10), (0, 6), (0, 8),
        (45, 5), (90, 10), (120, 10), (120, 20), (70, 10), (0, 12), (0, 6),
    ],
    "udds": [
        (0, 10), (25, 8), (40, 10), (48, 15), (30, 8), (0, 8), (0, 12),
        (20, 8), (45, 12), (58, 14), (55, 26), (60, 10), (35, 10), (0, 10), (0, 15),
        (30, 10), (50, 12), (50, 30), (38, 10), (45, 10), (20, 8), (0, 8), (0, 20),
        (35, 12), (65, 16), (88, 20), (90, 30), (70, 12), (48, 12), (0, 14), (0, 15),
        (25, 8), (40, 12), (32, 12), (0, 10), (0, 10),
    ],
    "wltp": [
        (0, 10), (20, 8), (45, 12), (50, 20), (25, 10), (0, 8), (0, 15),
        (30, 10), (55, 12), (70, 15), (70, 30), (45, 12), (0, 12), (0, 12),
        (35, 10), (70, 14), (95, 18), (100, 40), (80, 14), (60, 12), (0, 16), (0, 10),
        (40, 10), (80, 14), (110, 16), (125, 16), (131, 20), (120, 14), (90, 16), (40, 14), (0, 12), (0, 10),
    ],
}


def synthesize_trace(segments) -> np.ndarray:
    """Piecewise-linear 1 Hz trace (m/s) from (target km/h, seconds) segments."""
    v = [0.0]
    for target, seconds in segments:
        start = v[-1]
        end = target * KMH
        for k in range(1, int(seconds) + 1):
            v.append(start + (end - start) * k / seconds)
    return np.round(np.array(v), 6)


def write_builtin_cycles(directory) -> None:
    directory = Path(directory)
    for key, (fname, source) in BUILTIN.items():
        cycle = DriveCycle(key, synthesize_trace(_SEGMENTS[key]), source=source)
        text = "# synthetic stand-in shaped after the standard cycle; not the official trace\n"
        save_path = directory / fname
        save_path.write_text(text + format_cycle(cycle, "mps"))


def builtin_cycle(name: str) -> DriveCycle:
    if name not in BUILTIN:
        raise KeyError(f"unknown built-in cycle {name!r}; choose from {sorted(BUILTIN)}")
    fname, _ = BUILTIN[name]
    text = (resources.files("hev_madrl") / "data" / fname).read_text()
    return parse_cycle(text, name=name)


def resolve_cycle(ref) -> DriveCycle:
    """A DriveCycle, a built-in name, or a path to a trace file."""
    if isinstance(ref, DriveCycle):
        return ref
    if str(ref) in BUILTIN:
        return builtin_cycle(str(ref))
    return load_cycle(ref)


# ---------------------------------------------------------------------------
# Learning cycle


@dataclass(frozen=True)
class PhaseSpec:
    cycle: DriveCycle
    start: int
    end: int
    label: str

    def __post_init__(self):
        if not 0 <= self.start < self.end <= len(self.cycle):
            raise ValueError(
                f"phase {self.label}: need 0 <= start < end <= {len(self.cycle)}, "
                f"got [{self.start}, {self.end})"
            )

    @property
    def segment(self) -> np.ndarray:
        return self.cycle.samples[self.start:self.end]


# Windows picked by inspecting each built-in trace: a standstill-to-standstill
# micro-trip in the region the phase is meant to represent. Approximate;
# override in the experiment config.
DEFAULT_PHASE_WINDOWS = {
    "Phase1": ("artemis_rural", 2, 84),     # low-speed village section
    "Phase2": ("rts95", 45, 108),           # hardest accelerations
    "Phase3": ("udds", 69, 163),            # medium-speed urban
    "Phase4": ("wltp", 318, 455),           # high-speed
}


def default_phases(windows: dict | None = None) -> list[PhaseSpec]:
    windows = windows or DEFAULT_PHASE_WINDOWS
    return [
        PhaseSpec(resolve_cycle(src), int(start), int(end), label)
        for label, (src, start, end) in sorted(windows.items())
    ]


def build_learning_cycle(
    phases,
    seed=None,
    bridge_seconds: int = 3,
    order=None,
    name: str = "learning_cycle",
) -> DriveCycle:
    """Concatenate four phases in a seed-determined order.

    Adjacent phases are joined by ``bridge_seconds`` samples of a linear
    velocity ramp; ``bridge_seconds=0`` concatenates exactly.
    """
    phases = list(phases)
    if len(phases) != 4:
        raise ValueError(f"a learning cycle needs exactly four phases, got {len(phases)}")
    if order is None:
        order = np.random.default_rng(seed).permutation(4)
    order = [int(i) for i in order]
    if sorted(order) != [0, 1, 2, 3]:
        raise ValueError(f"order must be a permutation of 0..3, got {order}")
    pieces = []
    for pos, idx in enumerate(order):
        seg = phases[idx].segment
        if pos and bridge_seconds:
            a, b = pieces[-1][-1], seg[0]
            k = np.arange(1, bridge_seconds + 1)
            pieces.append(a + (b - a) * k / (bridge_seconds + 1))
        pieces.append(seg)
    return DriveCycle(name, np.concatenate(pieces), source=CycleSource.COMPOSITE)


def learning_cycle_order(seed) -> list[int]:
    return [int(i) for i in np.random.default_rng(seed).permutation(4)]
