"""Episodic wrapper around the plant and a drive cycle.

The environment hands back raw cost signals (losses, SoC, fuel rate); the
reward schemes live with the controllers that need them.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cycles import DriveCycle
from .errors import EpisodeNotFinished, InvalidInitialSoc, PowerInfeasible, SteppedAfterDone
from .plant import PowertrainModel, PowertrainState, plant_step, wheel_torque_demand

log = logging.getLogger(__name__)

GASOLINE_DENSITY = 745.0  # g/L

TRACE_COLUMNS = (
    "time_s", "v_mps", "t_dem_nm", "mode", "soc", "fuel_rate_gps",
    "p_loss_w", "loss_eng_w", "loss_batt_w", "u_mot1", "u_mot2", "u_eng",
)


@dataclass(frozen=True)
class Observation:
    t_dem: float   # Nm at the wheels
    soc: float
    speed: float = 0.0  # context for model-based controllers, not part of the state vector

    def as_array(self) -> np.ndarray:
        return np.array([self.t_dem, self.soc])

    def normalized(self, t_dem_scale: float) -> np.ndarray:
        return np.array([self.t_dem / t_dem_scale, self.soc])


@dataclass(frozen=True)
class StepOutcome:
    observation: Observation
    p_loss: float
    loss_eng: float
    loss_batt: float
    soc: float
    fuel_rate: float
    done: bool
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EpisodeMetrics:
    fuel_l_per_100km: float | None  # None when no distance was covered
    soc_initial: float
    soc_end: float
    distance: float      # m
    cumulative_loss: float  # J
    fuel_g: float
    steps: int
    soc_violation: bool


def fuel_economy(fuel_g: float, distance_m: float, density: float = GASOLINE_DENSITY):
    """L/100 km, or None for a zero-distance episode."""
    if distance_m <= 0.0:
        return None
    return (fuel_g / density) / (distance_m / 1e5)


class HevEnv:
    """One rollout of the PHEV over a drive cycle at 1 s ticks."""

    def __init__(
        self,
        model: PowertrainModel | None = None,
        cycle: DriveCycle | None = None,
        t_dem_scale: float = 1500.0,
        terminate_on_soc_violation: bool = True,
        fuel_density: float = GASOLINE_DENSITY,
        record_trace: bool = False,
    ):
        self.model = model or PowertrainModel.default()
        self.cycle = cycle
        self.t_dem_scale = t_dem_scale
        self.terminate_on_soc_violation = terminate_on_soc_violation
        self.fuel_density = fuel_density
        self.record_trace = record_trace
        self._state = None
        self._k = 0
        self._done = True
        self._trace = []

    @property
    def state(self) -> PowertrainState:
        return self._state

    @property
    def time(self) -> float:
        return self._k * self.model.params.dt

    @property
    def done(self) -> bool:
        return self._done

    def _observe(self, k: int) -> Observation:
        if k >= len(self.cycle):
            return Observation(0.0, self._state.soc, 0.0)
        v, a = self.cycle.speed(k), self.cycle.accel(k)
        return Observation(wheel_torque_demand(v, a, self.model.params), self._state.soc, v)

    def reset(self, cycle: DriveCycle | None = None, soc_initial: float = 0.28, seed=None) -> Observation:
        # the plant is deterministic; ``seed`` is accepted for interface symmetry
        p = self.model.params
        if cycle is not None:
            self.cycle = cycle
        if self.cycle is None:
            raise ValueError("no drive cycle given")
        if not p.soc_min < soc_initial < p.soc_max:
            raise InvalidInitialSoc(f"initial SoC {soc_initial} not in ({p.soc_min}, {p.soc_max})")
        self._state = PowertrainState(soc=float(soc_initial))
        self._soc_initial = float(soc_initial)
        self._k = 0
        self._done = False
        self._distance = 0.0
        self._cum_loss = 0.0
        self._violation = False
        self._trace = []
        self._obs = self._observe(0)
        return self._obs

    def step(self, action) -> StepOutcome:
        if self._done:
            raise SteppedAfterDone("episode finished; call reset()")
        p = self.model.params
        u1, u2 = float(action[0]), float(action[1])
        clamped = not (0.0 <= u1 <= 1.0 and -1.0 <= u2 <= 1.0)
        if clamped:
            log.debug("action %s clamped to range", (u1, u2))
        k = self._k
        v, a = self.cycle.speed(k), self.cycle.accel(k)
        try:
            state, cmd, t_dem = plant_step(self._state, u1, u2, v, a, self.model)
        except PowerInfeasible:
            log.warning("battery power infeasible at t=%s; terminating episode", self.time)
            self._done = True
            return StepOutcome(
                self._obs, 0.0, 0.0, 0.0, self._state.soc, 0.0, True,
                {"power_infeasible": True, "soc_violation": False},
            )
        violation = not p.soc_min <= state.soc <= p.soc_max
        if violation and not self.terminate_on_soc_violation:
            state.soc = min(max(state.soc, p.soc_min), p.soc_max)
        self._state = state
        self._k = k + 1
        self._distance += v * p.dt
        self._cum_loss += state.p_loss * p.dt
        self._violation = self._violation or violation
        self._done = self._k >= len(self.cycle) or (violation and self.terminate_on_soc_violation)
        if self.record_trace:
            self._trace.append((
                k * p.dt, v, t_dem, state.mode.value, state.soc, state.fuel_rate,
                state.p_loss, state.loss_eng, state.loss_batt, cmd.u_mot1, cmd.u_mot2, cmd.u_eng,
            ))
        self._obs = self._observe(self._k)
        return StepOutcome(
            observation=self._obs,
            p_loss=state.p_loss,
            loss_eng=state.loss_eng,
            loss_batt=state.loss_batt,
            soc=state.soc,
            fuel_rate=state.fuel_rate,
            done=self._done,
            diagnostics={
                "mode": state.mode.value,
                "saturated": state.saturated or clamped,
                "action_clamped": clamped,
                "soc_violation": violation,
                "t_unmet": cmd.t_unmet,
            },
        )

    def finalize(self) -> EpisodeMetrics:
        if self._state is None or not self._done:
            raise EpisodeNotFinished("episode still running")
        return EpisodeMetrics(
            fuel_l_per_100km=fuel_economy(self._state.fuel_used, self._distance, self.fuel_density),
            soc_initial=self._soc_initial,
            soc_end=self._state.soc,
            distance=self._distance,
            cumulative_loss=self._cum_loss,
            fuel_g=self._state.fuel_used,
            steps=self._k,
            soc_violation=self._violation,
        )

    @property
    def trace(self) -> list:
        return list(self._trace)

    def write_trace(self, path) -> None:
        write_trace(self._trace, path)


def write_trace(rows, path) -> None:
    lines = ["\t".join(TRACE_COLUMNS)]
    for row in rows:
        lines.append("\t".join(x if isinstance(x, str) else _fmt(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _fmt(x) -> str:
    if isinstance(x, float) and not math.isfinite(x):
        return "nan"
    return f"{x:.9g}"


def rollout(env: HevEnv, policy, cycle: DriveCycle, soc_initial: float) -> EpisodeMetrics:
    """Run ``policy(observation) -> (u_mot1, u_mot2)`` over a whole cycle."""
    obs = env.reset(cycle, soc_initial)
    while not env.done:
        obs = env.step(policy(obs)).observation
    return env.finalize()
