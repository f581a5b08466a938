"""Non-learning reference controllers: thermostat rules, grid ECMS, and a
small backward dynamic-programming oracle.

Controllers share the learning front-ends' call shape: ``policy(obs)``
returns ``(u_mot1, u_mot2)``, ``reset()`` clears any memory, and
``evaluate(cycle, soc)`` runs one exploration-free episode.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .cycles import DriveCycle
from .env import EpisodeMetrics, HevEnv, Observation
from .errors import ConfigError, GridTooLarge, PowerInfeasible
from .plant import (
    PowertrainModel,
    PowertrainState,
    RPM_TO_RAD_S,
    energy_flow_step,
    resolve_actuation,
    series_engine_speed,
    wheel_torque_demand,
)


def preview_step(model: PowertrainModel, soc: float, u1: float, u2: float, v: float, t_dem: float):
    """One plant step without SoC bound enforcement; None if the battery
    cannot deliver the requested power."""
    cmd = resolve_actuation(u1, u2, t_dem, v, model.params)
    try:
        return energy_flow_step(PowertrainState(soc=soc), cmd, v, t_dem, model)
    except PowerInfeasible:
        return None


class _Controller:
    model: PowertrainModel | None

    def _model(self) -> PowertrainModel:
        return self.model if self.model is not None else PowertrainModel.default()

    def reset(self) -> None:
        pass

    def fit(self, X=None, y=None):
        """No training; present so every controller exposes the same API."""
        return self

    def evaluate(self, cycle: DriveCycle, soc_initial: float = 0.28, trace_path=None) -> EpisodeMetrics:
        env = HevEnv(self._model(), record_trace=trace_path is not None)
        self.reset()
        obs = env.reset(cycle, soc_initial)
        while not env.done:
            obs = env.step(self.policy(obs)).observation
        if trace_path is not None:
            env.write_trace(trace_path)
        return env.finalize()


# ---------------------------------------------------------------------------
# thermostat


def generator_sweet_spot(model: PowertrainModel, resolution: int = 101) -> tuple[float, float]:
    """(rpm, Nm) along the series speed schedule with the best fuel-to-electric
    efficiency."""
    p = model.params
    best, best_eff = None, -1.0
    for u in np.linspace(0.0, 1.0, resolution)[1:]:
        t = u * p.t_mot1_max
        n = series_engine_speed(t, p)
        fuel_w = model.engine_map(n, t) * p.fuel_heat_j_per_g
        elec_w = n * RPM_TO_RAD_S * t * model.mg1_map(n, t)
        if fuel_w > 0 and elec_w / fuel_w > best_eff:
            best, best_eff = (n, t), elec_w / fuel_w
    return best


@dataclass(frozen=True)
class RuleBasedConfig:
    soc_low: float = 0.30
    soc_high: float = 0.32
    sweet_spot: tuple | None = None   # (rpm, Nm); None picks the best point on the series schedule
    u_mot2: float = 1.0

    def __post_init__(self):
        if not self.soc_low < self.soc_high:
            raise ConfigError(f"soc_low ({self.soc_low}) must be below soc_high ({self.soc_high})")


class RuleBasedController(_Controller):
    """Charge-sustaining thermostat with hysteresis.

    The generator runs at the sweet-spot torque once SoC falls below
    ``soc_low`` and stops once it rises above ``soc_high``; inside the band
    the previous engagement state holds. MG2 follows the torque demand.
    """

    def __init__(self, config: RuleBasedConfig | None = None, model: PowertrainModel | None = None):
        self.config = config or RuleBasedConfig()
        self.model = model
        spot = self.config.sweet_spot or generator_sweet_spot(self._model())
        self.sweet_spot = tuple(float(x) for x in spot)
        self.u_engaged = min(max(self.sweet_spot[1] / self._model().params.t_mot1_max, 0.0), 1.0)
        self.engaged = False

    def reset(self) -> None:
        self.engaged = False

    def step(self, soc: float, engaged: bool) -> tuple[tuple[float, float], bool]:
        """Pure transition: ``(action, next engagement state)``."""
        if soc < self.config.soc_low:
            engaged = True
        elif soc > self.config.soc_high:
            engaged = False
        u1 = self.u_engaged if engaged else 0.0
        return (u1, self.config.u_mot2), engaged

    def policy(self, obs: Observation) -> tuple[float, float]:
        action, self.engaged = self.step(obs.soc, self.engaged)
        return action

    __call__ = policy

    def predict(self, X) -> np.ndarray:
        """Actions for a sequence of ``[T_dem, SoC]`` rows, starting disengaged."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        engaged, out = False, []
        for row in X:
            action, engaged = self.step(row[1], engaged)
            out.append(action)
        return np.array(out)


# ---------------------------------------------------------------------------
# ECMS


@dataclass(frozen=True)
class EcmsConfig:
    equivalence_factor: float = 2.5
    u_mot1_levels: int = 5
    u_mot2_levels: int = 5

    def __post_init__(self):
        if self.u_mot1_levels < 2 or self.u_mot2_levels < 2:
            raise ConfigError("ECMS grids need at least two levels per axis")
        if self.equivalence_factor < 0:
            raise ConfigError("equivalence factor must be non-negative")

    def action_grid(self) -> list[tuple[float, float]]:
        return action_grid(np.linspace(0.0, 1.0, self.u_mot1_levels), np.linspace(-1.0, 1.0, self.u_mot2_levels))


def action_grid(u_mot1_values, u_mot2_values) -> list[tuple[float, float]]:
    return [(float(a), float(b)) for a, b in itertools.product(u_mot1_values, u_mot2_values)]


def ecms_cost(state: PowertrainState, s: float, model: PowertrainModel) -> float:
    """Fuel-equivalent rate in g/s: ``m_dot + s * P_batt / H_f``."""
    return state.fuel_rate + s * state.p_batt / model.params.fuel_heat_j_per_g


def ecms_step(obs: Observation, config: EcmsConfig, model: PowertrainModel, grid=None) -> tuple[float, float]:
    """Grid argmin of the instantaneous equivalent cost; ties go to the lower
    battery power."""
    best_key, best = None, None
    for u1, u2 in grid if grid is not None else config.action_grid():
        st = preview_step(model, obs.soc, u1, u2, obs.speed, obs.t_dem)
        if st is None:
            continue
        key = (ecms_cost(st, config.equivalence_factor, model), st.p_batt)
        if best_key is None or key < best_key:
            best_key, best = key, (u1, u2)
    if best is None:
        raise PowerInfeasible("no grid action is feasible for the battery")
    return best


class EcmsController(_Controller):
    def __init__(self, config: EcmsConfig | None = None, model: PowertrainModel | None = None, grid=None):
        self.config = config or EcmsConfig()
        self.model = model
        self.grid = list(grid) if grid is not None else self.config.action_grid()
        self._m = self._model()

    def policy(self, obs: Observation) -> tuple[float, float]:
        return ecms_step(obs, self.config, self._m, self.grid)

    __call__ = policy

    def predict(self, X) -> np.ndarray:
        """Actions for ``[T_dem, SoC, speed]`` rows."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != 3:
            raise ValueError("ECMS needs [T_dem, SoC, speed] columns")
        return np.array([self.policy(Observation(*row)) for row in X])


# ---------------------------------------------------------------------------
# dynamic programming


def battery_energy_j(model: PowertrainModel) -> float:
    p = model.params
    return p.batt_capacity * 3600.0 * p.batt_ocv


def linear_soc_terminal(soc_ref: float, model: PowertrainModel, s: float = 2.5):
    """Terminal cost in grams: the SoC deficit priced at ``s`` times its
    open-circuit energy's fuel equivalent (a surplus earns a credit)."""
    scale = s * battery_energy_j(model) / model.params.fuel_heat_j_per_g

    def terminal(soc):
        return scale * (soc_ref - np.asarray(soc, dtype=float))

    return terminal


def battery_power_terminal(soc_ref: float, model: PowertrainModel, s: float = 2.5):
    """Terminal cost that prices a one-step SoC change by the terminal battery
    power it implies, so a one-stage problem reproduces the ECMS cost."""
    p = model.params
    coulombs = p.batt_capacity * 3600.0

    def terminal(soc):
        i = (soc_ref - np.asarray(soc, dtype=float)) * coulombs / p.dt
        p_batt = p.batt_ocv * i - p.batt_resistance * i * i
        return s * p_batt * p.dt / p.fuel_heat_j_per_g

    return terminal


@dataclass
class DPResult:
    cost: float               # optimal cost from soc_initial, grams fuel-equivalent
    first_action: tuple
    policy: np.ndarray        # (stages, soc levels) action indices, -1 where infeasible
    value: np.ndarray         # (stages + 1, soc levels); the last row is the terminal cost
    actions: list
    soc_grid: np.ndarray

    def action_at(self, k: int, soc: float) -> tuple:
        j = self.policy[k, int(np.argmin(np.abs(self.soc_grid - soc)))]
        return self.actions[j]


def stage_table(cycle: DriveCycle, actions, model: PowertrainModel):
    """Fuel grams and SoC change per (stage, action). The plant's step does not
    depend on SoC, so one evaluation per pair suffices; infeasible pairs are NaN."""
    n, m = len(cycle), len(actions)
    fuel = np.full((n, m), np.nan)
    dsoc = np.full((n, m), np.nan)
    p = model.params
    for k in range(n):
        v, a = cycle.speed(k), cycle.accel(k)
        t_dem = wheel_torque_demand(v, a, p)
        for j, (u1, u2) in enumerate(actions):
            st = preview_step(model, 0.5, u1, u2, v, t_dem)
            if st is not None:
                fuel[k, j] = st.fuel_rate * p.dt
                dsoc[k, j] = st.soc - 0.5
    return fuel, dsoc


def dp_oracle(
    cycle: DriveCycle,
    soc_grid,
    actions,
    soc_initial: float,
    model: PowertrainModel | None = None,
    terminal=None,
    equivalence_factor: float = 2.5,
    max_evaluations: int = 5_000_000,
) -> DPResult:
    """Backward induction over an SoC grid.

    Values between grid points are linearly interpolated; the terminal cost
    is evaluated exactly at the final SoC. SoC outside the plant's bounds or
    the grid's range is infeasible.
    """
    model = model or PowertrainModel.default()
    grid = np.asarray(soc_grid, dtype=float)
    actions = [tuple(map(float, a)) for a in actions]
    n, m = len(cycle), len(actions)
    if n * len(grid) * m > max_evaluations:
        raise GridTooLarge(f"{n} stages x {len(grid)} SoC levels x {m} actions exceeds {max_evaluations}")
    if len(grid) < 2 or np.any(np.diff(grid) <= 0):
        raise ConfigError("SoC grid must be strictly increasing with at least two levels")
    p = model.params
    terminal = terminal or linear_soc_terminal(soc_initial, model, equivalence_factor)
    fuel, dsoc = stage_table(cycle, actions, model)
    lo, hi = max(grid[0], p.soc_min), min(grid[-1], p.soc_max)

    def next_value(k, soc_next):
        # soc_next has shape (levels, actions)
        out = np.full(soc_next.shape, np.inf)
        ok = np.isfinite(soc_next) & (soc_next >= lo) & (soc_next <= hi)
        if k == n - 1:
            out[ok] = terminal(soc_next[ok])
        else:
            vals = np.interp(soc_next[ok], grid, value[k + 1])
            out[ok] = np.where(np.isnan(vals), np.inf, vals)
        return out

    value = np.full((n + 1, len(grid)), np.inf)
    value[n] = terminal(grid)
    policy = np.full((n, len(grid)), -1, dtype=int)
    with np.errstate(invalid="ignore"):
        for k in range(n - 1, -1, -1):
            total = fuel[k][None, :] + next_value(k, grid[:, None] + dsoc[k][None, :])
            total = np.where(np.isnan(total), np.inf, total)
            best = np.argmin(total, axis=1)
            value[k] = total[np.arange(len(grid)), best]
            policy[k] = np.where(np.isfinite(value[k]), best, -1)
        first = fuel[0][None, :] + next_value(0, np.array([[soc_initial]]) + dsoc[0][None, :])
        first = np.where(np.isnan(first), np.inf, first)[0]
    j = int(np.argmin(first))
    if not np.isfinite(first[j]):
        raise PowerInfeasible("no feasible action sequence from the initial SoC")
    return DPResult(float(first[j]), actions[j], policy, value, actions, grid)


def trajectory_cost(
    cycle: DriveCycle,
    controller,
    soc_initial: float,
    model: PowertrainModel | None = None,
    terminal=None,
    equivalence_factor: float = 2.5,
) -> float:
    """Fuel grams plus the DP terminal cost for a forward rollout of ``controller``."""
    model = model or PowertrainModel.default()
    terminal = terminal or linear_soc_terminal(soc_initial, model, equivalence_factor)
    env = HevEnv(model, terminate_on_soc_violation=False)
    if hasattr(controller, "reset"):
        controller.reset()
    policy = controller.policy if hasattr(controller, "policy") else controller
    obs = env.reset(cycle, soc_initial)
    while not env.done:
        obs = env.step(policy(obs)).observation
    m = env.finalize()
    return m.fuel_g + float(terminal(m.soc_end))


def snap_to_grid(action, actions) -> tuple:
    """Nearest grid action (Euclidean in command space)."""
    arr = np.asarray(actions, dtype=float)
    j = int(np.argmin(np.sum((arr - np.asarray(action, dtype=float)) ** 2, axis=1)))
    return tuple(map(float, arr[j]))


class GridSnapped:
    """Restrict a controller to a discrete action grid."""

    def __init__(self, controller, actions):
        self.controller = controller
        self.actions = list(actions)

    def reset(self):
        if hasattr(self.controller, "reset"):
            self.controller.reset()

    def policy(self, obs):
        return snap_to_grid(self.controller.policy(obs), self.actions)
