"""Multi-mode PHEV energy-flow plant.

Longitudinal demand, series/parallel energy flow, component maps, the
internal-resistance battery and loss bookkeeping. Everything is SI inside:
speeds are converted from rpm with the exact factor 2*pi/60, so ``n*T/9550``
in kW and ``omega*T`` in W agree up to the rounding of 9550.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields, replace
from enum import Enum
from pathlib import Path

import yaml

from .errors import ConfigError, PowerInfeasible, SocOutOfBounds
from .maps import FUEL_KIND, RPM_TO_RAD_S, EfficiencyMap, default_maps, load_map

log = logging.getLogger(__name__)


class Mode(str, Enum):
    SERIES = "Series"
    PARALLEL = "Parallel"


@dataclass(frozen=True)
class PlantParameters:
    """Vehicle, driveline and battery constants.

    Battery values and the fuel heat value follow the published plant; the
    vehicle body, ratios and torque limits are documented defaults.
    """

    mass: float = 1800.0                 # kg
    gravity: float = 9.81                # m/s^2
    rolling_coeff: float = 0.012
    air_density: float = 1.205           # kg/m^3
    frontal_area: float = 2.3            # m^2
    drag_coeff: float = 0.30
    wheel_radius: float = 0.32           # m
    gear_ratio_mg1: float = 3.0          # i_1, engine/MG1 shaft to wheels
    final_ratio_mg2: float = 8.0         # i_2, MG2 to wheels
    t_mot1_max: float = 120.0            # Nm
    t_mot2_max: float = 280.0            # Nm
    t_eng_max: float = 155.0             # Nm
    fuel_heat_value: float = 43.5        # kJ/g
    batt_ocv: float = 350.0              # V
    batt_resistance: float = 0.15        # ohm
    batt_capacity: float = 54.3          # Ah
    soc_min: float = 0.10
    soc_max: float = 0.90
    dt: float = 1.0                      # s
    n_idle: float = 1000.0               # rpm
    n_eng_max: float = 4500.0            # rpm
    n_series_full: float = 2500.0        # rpm, generator speed at full MG1 load
    batt_charge_power_max: float = 60e3  # W, regenerative braking limit
    engine_path_ratio: float | None = None  # ratio engine shaft -> wheels; None means i_1

    def __post_init__(self):
        positive = (
            "mass", "gravity", "air_density", "frontal_area", "drag_coeff", "wheel_radius",
            "gear_ratio_mg1", "final_ratio_mg2", "t_mot1_max", "t_mot2_max", "t_eng_max",
            "fuel_heat_value", "batt_ocv", "batt_resistance", "batt_capacity", "dt",
            "n_idle", "n_eng_max", "n_series_full", "batt_charge_power_max",
        )
        for name in positive:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and value > 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be strictly positive, got {value!r}")
        if self.rolling_coeff < 0:
            raise ConfigError("rolling_coeff must be non-negative")
        if not 0.0 <= self.soc_min < self.soc_max <= 1.0:
            raise ConfigError("need 0 <= soc_min < soc_max <= 1")
        if self.engine_path_ratio is not None and self.engine_path_ratio <= 0:
            raise ConfigError("engine_path_ratio must be positive")
        if not self.n_idle < self.n_eng_max:
            raise ConfigError("n_idle must be below n_eng_max")

    @property
    def path_ratio(self) -> float:
        return self.gear_ratio_mg1 if self.engine_path_ratio is None else self.engine_path_ratio

    @property
    def fuel_heat_j_per_g(self) -> float:
        return self.fuel_heat_value * 1000.0

    @property
    def max_discharge_power(self) -> float:
        return self.batt_ocv ** 2 / (4.0 * self.batt_resistance)


# config keys carry their units
_UNIT_KEYS = {
    "mass": "mass_kg",
    "gravity": "gravity_m_per_s2",
    "rolling_coeff": "rolling_coeff",
    "air_density": "air_density_kg_per_m3",
    "frontal_area": "frontal_area_m2",
    "drag_coeff": "drag_coeff",
    "wheel_radius": "wheel_radius_m",
    "gear_ratio_mg1": "gear_ratio_mg1",
    "final_ratio_mg2": "final_ratio_mg2",
    "t_mot1_max": "t_mot1_max_nm",
    "t_mot2_max": "t_mot2_max_nm",
    "t_eng_max": "t_eng_max_nm",
    "fuel_heat_value": "fuel_heat_value_kj_per_g",
    "batt_ocv": "batt_ocv_v",
    "batt_resistance": "batt_resistance_ohm",
    "batt_capacity": "batt_capacity_ah",
    "soc_min": "soc_min",
    "soc_max": "soc_max",
    "dt": "dt_s",
    "n_idle": "n_idle_rpm",
    "n_eng_max": "n_eng_max_rpm",
    "n_series_full": "n_series_full_rpm",
    "batt_charge_power_max": "batt_charge_power_max_w",
    "engine_path_ratio": "engine_path_ratio",
}
_FIELD_FOR_KEY = {v: k for k, v in _UNIT_KEYS.items()}


def parameters_from_dict(data: dict) -> PlantParameters:
    unknown = set(data) - set(_FIELD_FOR_KEY)
    if unknown:
        raise ConfigError(f"unknown plant parameter keys: {sorted(unknown)}")
    return PlantParameters(**{_FIELD_FOR_KEY[k]: v for k, v in data.items()})


def parameters_to_dict(params: PlantParameters) -> dict:
    return {_UNIT_KEYS[f.name]: getattr(params, f.name) for f in fields(params)}


def load_parameters(path) -> PlantParameters:
    data = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a key-value mapping")
    return parameters_from_dict(data)


def save_parameters(params: PlantParameters, path) -> None:
    Path(path).write_text(yaml.safe_dump(parameters_to_dict(params), sort_keys=False))


@dataclass(frozen=True)
class PowertrainModel:
    """Parameters plus the three component maps."""

    params: PlantParameters
    engine_map: EfficiencyMap
    mg1_map: EfficiencyMap
    mg2_map: EfficiencyMap

    @classmethod
    def default(cls, params: PlantParameters | None = None) -> "PowertrainModel":
        maps = default_maps()
        return cls(params or PlantParameters(), maps["engine"], maps["mg1"], maps["mg2"])

    @classmethod
    def from_files(cls, params_path=None, engine=None, mg1=None, mg2=None) -> "PowertrainModel":
        base = cls.default(load_parameters(params_path) if params_path else None)
        return cls(
            base.params,
            load_map(engine, FUEL_KIND) if engine else base.engine_map,
            load_map(mg1) if mg1 else base.mg1_map,
            load_map(mg2) if mg2 else base.mg2_map,
        )

    def with_params(self, **changes) -> "PowertrainModel":
        return replace(self, params=replace(self.params, **changes))


@dataclass
class PowertrainState:
    soc: float
    fuel_used: float = 0.0      # g
    mode: Mode = Mode.SERIES
    n_eng: float = 0.0          # rpm
    n_mot1: float = 0.0
    n_mot2: float = 0.0
    t_eng: float = 0.0          # Nm
    t_mot1: float = 0.0
    t_mot2: float = 0.0
    p_batt: float = 0.0         # W
    p_mot1: float = 0.0
    p_mot2: float = 0.0
    p_eng: float = 0.0          # engine shaft power
    p_loss: float = 0.0
    loss_eng: float = 0.0
    loss_batt: float = 0.0
    i_batt: float = 0.0         # A
    fuel_rate: float = 0.0      # g/s
    saturated: bool = False

    def as_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        return d


@dataclass(frozen=True)
class ActuatorCommand:
    u_mot1: float      # MG1 generator load fraction actually applied
    u_mot2: float      # MG2 command fraction as requested (after range clamp)
    u_eng: float
    t_gb: float        # engine shaft torque sent to the wheels, Nm
    t_mot1: float      # MG1 load torque, Nm
    t_mot2: float      # MG2 shaft torque, Nm (negative = generating)
    t_brake: float     # friction brake torque at the wheels, Nm (<= 0)
    t_unmet: float     # wheel torque demand the powertrain could not deliver, Nm
    mode: Mode
    saturated: bool


def compute_demand(v: float, a: float, params: PlantParameters) -> tuple[float, float, float]:
    """Force (N), power (W) and wheel torque (Nm) demand on a level road."""
    p = params
    force = (
        p.mass * p.gravity * p.rolling_coeff
        + 0.5 * p.air_density * p.frontal_area * p.drag_coeff * v * v
        + p.mass * a
    )
    return force, force * v, force * p.wheel_radius


def wheel_torque_demand(v: float, a: float, params: PlantParameters) -> float:
    """Wheel torque the powertrain must deliver.

    A vehicle at rest that is not accelerating is held by static friction and
    the brakes, so rolling resistance produces no traction demand there.
    """
    if v <= 0.0 and a <= 0.0:
        return 0.0
    return compute_demand(v, a, params)[2]


def battery_step(
    p_batt: float, soc: float, params: PlantParameters, enforce_bounds: bool = True
) -> tuple[float, float, float]:
    """Internal-resistance battery over one ``dt``.

    Returns ``(current A, next SoC, resistive loss W)``. Positive power and
    current discharge the pack.
    """
    u, r = params.batt_ocv, params.batt_resistance
    disc = u * u - 4.0 * r * p_batt
    if disc < 0.0:
        raise PowerInfeasible(
            f"battery power {p_batt:.1f} W exceeds circuit maximum {params.max_discharge_power:.1f} W"
        )
    i_batt = (u - math.sqrt(disc)) / (2.0 * r)
    soc_next = soc - i_batt * params.dt / (params.batt_capacity * 3600.0)
    if enforce_bounds and not params.soc_min <= soc_next <= params.soc_max:
        raise SocOutOfBounds(
            f"SoC {soc_next:.6f} outside [{params.soc_min}, {params.soc_max}]"
        )
    return i_batt, soc_next, r * i_batt * i_batt


def resolve_actuation(
    u_mot1: float, u_mot2: float, t_dem: float, v: float, params: PlantParameters
) -> ActuatorCommand:
    """Map the two motor commands to torques, engine command and mode.

    MG2 delivers at most ``u_mot2 * t_mot2_max`` toward positive demand; the
    shortfall reaches the engine shaft through the engine path ratio and
    engages the clutch. Negative demand is regenerated by MG2 up to its torque
    limit and the friction brakes take the rest.
    """
    p = params
    saturated = False
    u1 = min(max(u_mot1, 0.0), 1.0)
    u2 = min(max(u_mot2, -1.0), 1.0)
    if u1 != u_mot1 or u2 != u_mot2:
        saturated = True
    t_brake = 0.0
    t_unmet = 0.0
    if t_dem >= 0.0:
        t_mot2 = min(u2 * p.t_mot2_max, t_dem / p.final_ratio_mg2)
        shortfall = t_dem - p.final_ratio_mg2 * t_mot2
        t_gb = max(shortfall, 0.0) / p.path_ratio
    else:
        t_mot2 = max(t_dem / p.final_ratio_mg2, -p.t_mot2_max)
        t_brake = t_dem - p.final_ratio_mg2 * t_mot2
        t_gb = 0.0
    t_mot1 = u1 * p.t_mot1_max
    if t_gb > p.t_eng_max:
        t_unmet = (t_gb - p.t_eng_max) * p.path_ratio
        t_gb = p.t_eng_max
        saturated = True
    if t_mot1 + t_gb > p.t_eng_max:
        t_mot1 = p.t_eng_max - t_gb
        saturated = True
    u_eng = (t_mot1 + t_gb) / p.t_eng_max
    mode = Mode.PARALLEL if t_gb > 0.0 else Mode.SERIES
    if saturated:
        log.debug("actuation saturated: u=(%.3f, %.3f) t_dem=%.1f", u_mot1, u_mot2, t_dem)
    return ActuatorCommand(
        u_mot1=t_mot1 / p.t_mot1_max,
        u_mot2=u2,
        u_eng=u_eng,
        t_gb=t_gb,
        t_mot1=t_mot1,
        t_mot2=t_mot2,
        t_brake=t_brake,
        t_unmet=t_unmet,
        mode=mode,
        saturated=saturated,
    )


def series_engine_speed(t_mot1: float, params: PlantParameters) -> float:
    """Generator-set speed schedule: idle at no load, rising linearly with load."""
    frac = t_mot1 / params.t_mot1_max
    return params.n_idle + (params.n_series_full - params.n_idle) * frac


def energy_flow_step(
    state: PowertrainState,
    command: ActuatorCommand,
    v: float,
    t_dem: float,
    model: PowertrainModel,
    enforce_soc_bounds: bool = False,
) -> PowertrainState:
    """Advance the plant one ``dt`` under an already-resolved command."""
    p = model.params
    saturated = command.saturated
    w_wheel = v / p.wheel_radius
    w_mot2 = w_wheel * p.final_ratio_mg2
    n_mot2 = w_mot2 / RPM_TO_RAD_S

    t_mot2 = command.t_mot2
    if t_mot2 < 0.0 and -t_mot2 * w_mot2 > p.batt_charge_power_max:
        # regen above the charge limit goes to the friction brakes
        t_mot2 = -p.batt_charge_power_max / w_mot2
        saturated = True

    p_mot2_mech = t_mot2 * w_mot2
    if t_mot2 > 0.0:
        p_mot2 = p_mot2_mech / model.mg2_map(n_mot2, t_mot2)
    else:
        p_mot2 = p_mot2_mech * model.mg2_map(n_mot2, -t_mot2)

    if command.mode is Mode.PARALLEL:
        n_eng = w_wheel * p.path_ratio / RPM_TO_RAD_S
        if n_eng < p.n_idle or n_eng > p.n_eng_max:
            n_eng = min(max(n_eng, p.n_idle), p.n_eng_max)
            saturated = True
    else:
        n_eng = series_engine_speed(command.t_mot1, p)
    n_mot1 = n_eng
    t_eng = command.t_mot1 + command.t_gb
    w_eng = n_eng * RPM_TO_RAD_S
    p_eng = w_eng * t_eng
    p_mot1 = w_eng * command.t_mot1 * model.mg1_map(n_mot1, command.t_mot1)
    fuel_rate = model.engine_map(n_eng, t_eng)

    p_batt = p_mot2 - p_mot1
    i_batt, soc_next, loss_batt = battery_step(p_batt, state.soc, p, enforce_bounds=enforce_soc_bounds)
    loss_eng = fuel_rate * p.fuel_heat_j_per_g - p_eng
    return PowertrainState(
        soc=soc_next,
        fuel_used=state.fuel_used + fuel_rate * p.dt,
        mode=command.mode,
        n_eng=n_eng,
        n_mot1=n_mot1,
        n_mot2=n_mot2,
        t_eng=t_eng,
        t_mot1=command.t_mot1,
        t_mot2=t_mot2,
        p_batt=p_batt,
        p_mot1=p_mot1,
        p_mot2=p_mot2,
        p_eng=p_eng,
        p_loss=loss_eng + loss_batt,
        loss_eng=loss_eng,
        loss_batt=loss_batt,
        i_batt=i_batt,
        fuel_rate=fuel_rate,
        saturated=saturated,
    )


def plant_step(
    state: PowertrainState,
    u_mot1: float,
    u_mot2: float,
    v: float,
    a: float,
    model: PowertrainModel,
) -> tuple[PowertrainState, ActuatorCommand, float]:
    """Demand, actuation and energy flow for one tick. Returns (state, command, t_dem)."""
    t_dem = wheel_torque_demand(v, a, model.params)
    command = resolve_actuation(u_mot1, u_mot2, t_dem, v, model.params)
    return energy_flow_step(state, command, v, t_dem, model), command, t_dem
