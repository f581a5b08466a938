"""Single-agent and hand-shaking two-agent DDPG energy management.

Both systems observe the same two-element state ``[T_dem, SoC]``. The
single agent drives MG1 and holds the MG2 command constant; in the two-agent
system agent 1 drives MG1 and agent 2 drives MG2, each trained on its own
joint reward ``R_rel * r_global + r_local``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .agent import AgentConfig, DDPGAgent, substream
from .cycles import DriveCycle, PhaseSpec, build_learning_cycle, default_phases
from .env import EpisodeMetrics, HevEnv, Observation, StepOutcome
from .errors import AgentCountMismatch, ConfigError
from .plant import PowertrainModel


class ControlMode(str, Enum):
    SINGLE = "Single"
    MULTI = "Multi"


@dataclass(frozen=True)
class RewardWeights:
    """Weights of the loss and SoC terms.

    ``power_weight`` converts watts of loss into reward units for the
    single-agent reward and the engine-loss local reward. The shared global
    term carries no weight of its own: it is the loss expressed in
    ``global_power_unit`` watts. The SoC weight is two-valued:
    ``soc_weight_active`` below the reference, 0 at or above it.
    ``soc_ref=None`` uses the episode's initial SoC.
    """

    power_weight: float = 3e-7       # per W
    soc_weight_active: float = 2.0
    soc_ref: float | None = None
    global_power_unit: float = 1.2e6  # W per unit of global reward

    def __post_init__(self):
        if self.power_weight <= 0:
            raise ConfigError("power_weight must be positive")
        if self.global_power_unit <= 0:
            raise ConfigError("global_power_unit must be positive")
        if self.soc_weight_active < 0:
            raise ConfigError("soc_weight_active must be non-negative")


def soc_weight(soc: float, soc_ref: float, active: float = 2.0) -> float:
    return 0.0 if soc >= soc_ref else active


def _soc_ref(weights: RewardWeights, soc_ref):
    ref = weights.soc_ref if soc_ref is None else soc_ref
    if ref is None:
        raise ConfigError("no SoC reference: set RewardWeights.soc_ref or pass soc_ref")
    return ref


def single_agent_reward(outcome: StepOutcome, weights: RewardWeights, soc_ref: float | None = None) -> float:
    """``-a * P_loss - b(SoC) * |SoC_ref - SoC|``."""
    ref = _soc_ref(weights, soc_ref)
    b = soc_weight(outcome.soc, ref, weights.soc_weight_active)
    return -weights.power_weight * outcome.p_loss - b * abs(ref - outcome.soc)


def global_reward(outcome: StepOutcome, weights: RewardWeights) -> float:
    """``-P_loss`` in units of ``global_power_unit``."""
    return -outcome.p_loss / weights.global_power_unit


def local_rewards(outcome: StepOutcome, weights: RewardWeights, soc_ref: float | None = None):
    ref = _soc_ref(weights, soc_ref)
    b = soc_weight(outcome.soc, ref, weights.soc_weight_active)
    return -b * abs(ref - outcome.soc), -weights.power_weight * outcome.loss_eng


def handshake_rewards(outcome: StepOutcome, weights: RewardWeights, relevance_ratio: float,
                      soc_ref: float | None = None) -> tuple[float, float]:
    """Joint rewards ``(r_m1, r_m2)`` blending the shared loss term into each local term."""
    if not 0.0 <= relevance_ratio <= 1.0:
        raise ConfigError(f"relevance ratio must lie in [0, 1], got {relevance_ratio}")
    r_global = global_reward(outcome, weights)
    r_local1, r_local2 = local_rewards(outcome, weights, soc_ref)
    return relevance_ratio * r_global + r_local1, relevance_ratio * r_global + r_local2


def actor_to_u_mot1(y) -> float:
    """tanh output in [-1, 1] to MG1 load fraction in [0, 1]."""
    return 0.5 * (float(y) + 1.0)


def actor_to_u_mot2(y) -> float:
    return float(y)


def assemble_action(mode, outputs, u_mot2_constant: float = 1.0) -> tuple[float, float]:
    """Combine per-agent commands (already in actuator units) into ``(u_mot1, u_mot2)``."""
    mode = ControlMode(mode)
    outputs = list(outputs)
    if mode is ControlMode.SINGLE:
        if len(outputs) != 1:
            raise AgentCountMismatch(f"single-agent mode takes one output, got {len(outputs)}")
        return float(outputs[0]), float(u_mot2_constant)
    if len(outputs) != 2:
        raise AgentCountMismatch(f"multi-agent mode takes two outputs, got {len(outputs)}")
    return float(outputs[0]), float(outputs[1])


# ---------------------------------------------------------------------------
# learning history


@dataclass
class EpisodeRecord:
    episode: int
    rewards: tuple
    soc_end: float
    fuel_l_per_100km: float | None
    steps: int


@dataclass
class LearningHistory:
    n_agents: int
    records: list = field(default_factory=list)

    COLUMNS = ("episode", "reward_agent_1", "reward_agent_2", "soc_end", "fuel_l_per_100km")

    def __len__(self) -> int:
        return len(self.records)

    def rewards(self, agent: int = 0) -> np.ndarray:
        return np.array([r.rewards[agent] for r in self.records])

    def to_tsv(self) -> str:
        lines = ["\t".join(self.COLUMNS)]
        for r in self.records:
            r2 = _fmt(r.rewards[1]) if self.n_agents > 1 else "NA"
            fuel = "NA" if r.fuel_l_per_100km is None else _fmt(r.fuel_l_per_100km)
            lines.append("\t".join([str(r.episode), _fmt(r.rewards[0]), r2, _fmt(r.soc_end), fuel]))
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_tsv())


def _fmt(x: float) -> str:
    return f"{x:.10g}"


# ---------------------------------------------------------------------------
# training engine


@dataclass
class TrainingSetup:
    mode: ControlMode
    weights: RewardWeights
    relevance_ratio: float = 0.2
    u_mot2_constant: float = 1.0
    soc_initial: float = 0.28
    seed: int = 0
    learning: bool = True
    phases: list | None = None
    cycle: DriveCycle | None = None
    bridge_seconds: int = 3
    t_dem_scale: float = 1500.0
    soc_scale: float = 0.05

    @property
    def soc_ref(self) -> float:
        return self.weights.soc_ref if self.weights.soc_ref is not None else self.soc_initial


def state_vector(obs: Observation, soc_ref: float, t_dem_scale: float, soc_scale: float) -> np.ndarray:
    """Network input: torque demand and SoC, both scaled. SoC enters as its
    deviation from the reference, which is all the reward depends on."""
    return np.array([obs.t_dem / t_dem_scale, (obs.soc - soc_ref) / soc_scale])


def episode_cycle(setup: TrainingSetup, rng) -> DriveCycle:
    if setup.cycle is not None:
        return setup.cycle
    order = rng.permutation(4)
    return build_learning_cycle(setup.phases, order=order, bridge_seconds=setup.bridge_seconds)


def agent_commands(mode: ControlMode, actor_outputs, u_mot2_constant: float = 1.0) -> tuple[float, float]:
    if mode is ControlMode.SINGLE:
        return assemble_action(mode, [actor_to_u_mot1(actor_outputs[0][0])], u_mot2_constant)
    return assemble_action(mode, [actor_to_u_mot1(actor_outputs[0][0]), actor_to_u_mot2(actor_outputs[1][0])])


def step_rewards(setup: TrainingSetup, outcome: StepOutcome, soc_ref: float) -> tuple:
    if setup.mode is ControlMode.SINGLE:
        return (single_agent_reward(outcome, setup.weights, soc_ref),)
    return handshake_rewards(outcome, setup.weights, setup.relevance_ratio, soc_ref)


def _ready(agent: DDPGAgent, total_steps: int) -> bool:
    c = agent.config
    return total_steps > c.warmup_steps and len(agent.buffer) >= c.batch_size


def train(episodes: int, env_factory, agents, setup: TrainingSetup, callback=None) -> LearningHistory:
    """Episode loop: reshuffled learning cycle, shared observation, per-agent rewards.

    With per-step cadence the agents are updated one after another after
    every environment step, each from its own replay memory.
    """
    expected = 1 if setup.mode is ControlMode.SINGLE else 2
    if len(agents) != expected:
        raise AgentCountMismatch(f"{setup.mode.value} mode needs {expected} agent(s), got {len(agents)}")
    history = LearningHistory(len(agents))
    cycle_rng = substream(setup.seed, "cycle")
    env = env_factory()
    ref = setup.soc_ref
    total_steps = 0

    def features(obs):
        return state_vector(obs, ref, setup.t_dem_scale, setup.soc_scale)

    for ep in range(episodes):
        cycle = episode_cycle(setup, cycle_rng)
        s = features(env.reset(cycle, setup.soc_initial))
        for ag in agents:
            ag.begin_episode(ep)
        totals = [0.0] * len(agents)
        ep_steps = 0
        while not env.done:
            outs = [ag.act(s, explore=setup.learning) for ag in agents]
            outcome = env.step(agent_commands(setup.mode, outs, setup.u_mot2_constant))
            s_next = features(outcome.observation)
            rs = step_rewards(setup, outcome, ref)
            for i, ag in enumerate(agents):
                totals[i] += rs[i]
                if setup.learning:
                    ag.remember(s, outs[i], rs[i], s_next, outcome.done)
            total_steps += 1
            ep_steps += 1
            if setup.learning:
                for ag in agents:
                    if ag.config.update_cadence == "step" and _ready(ag, total_steps):
                        ag.train_step()
            s = s_next
        if setup.learning:
            for ag in agents:
                if ag.config.update_cadence == "episode" and _ready(ag, total_steps):
                    for _ in range(ag.config.updates_per_episode or ep_steps):
                        ag.train_step()
        m = env.finalize()
        history.records.append(EpisodeRecord(ep, tuple(totals), m.soc_end, m.fuel_l_per_100km, m.steps))
        if callback is not None:
            callback(ep, history.records[-1])
    return history


# ---------------------------------------------------------------------------
# estimator front-ends


class _DDPGEnergyManager(BaseEstimator):
    _mode: ControlMode

    def _weights(self) -> RewardWeights:
        return RewardWeights(self.power_weight, self.soc_weight_active, self.soc_ref, self.global_power_unit)

    def _setup(self, X=None) -> TrainingSetup:
        phases, cycle = None, None
        if isinstance(X, DriveCycle):
            cycle = X
        elif X is not None:
            phases = list(X)
            if not all(isinstance(p, PhaseSpec) for p in phases):
                raise ConfigError("fit expects a DriveCycle or four PhaseSpec objects")
        else:
            phases = default_phases()
        return TrainingSetup(
            mode=self._mode,
            weights=self._weights(),
            relevance_ratio=getattr(self, "relevance_ratio", 0.0),
            u_mot2_constant=getattr(self, "u_mot2_constant", 1.0),
            soc_initial=self.soc_initial,
            seed=self.seed,
            phases=phases,
            cycle=cycle,
            bridge_seconds=self.bridge_seconds,
            t_dem_scale=self.t_dem_scale,
            soc_scale=self.soc_scale,
        )

    @property
    def n_agents(self) -> int:
        return 1 if self._mode is ControlMode.SINGLE else 2

    def _model(self) -> PowertrainModel:
        return self.model if self.model is not None else PowertrainModel.default()

    def _agent_config(self) -> AgentConfig:
        if isinstance(self.agent_config, AgentConfig):
            return self.agent_config
        return AgentConfig.from_dict(self.agent_config or {})

    def fit(self, X=None, y=None, callback=None):
        """Train on ``X``: four ``PhaseSpec`` (reshuffled each episode), one
        ``DriveCycle``, or None for the default learning-cycle phases."""
        setup = self._setup(X)
        model = self._model()
        config = self._agent_config()
        self.agents_ = [DDPGAgent(2, 1, config, seed=self.seed, name=f"agent{i + 1}") for i in range(self.n_agents)]
        self.history_ = train(self.episodes, lambda: HevEnv(model, t_dem_scale=self.t_dem_scale),
                              self.agents_, setup, callback)
        return self

    def policy(self, obs: Observation, soc_ref: float | None = None) -> tuple[float, float]:
        """Greedy command for one observation. ``soc_ref`` defaults to the
        configured reference, else the training initial SoC."""
        check_is_fitted(self, "agents_")
        if soc_ref is None:
            soc_ref = self.soc_ref if self.soc_ref is not None else self.soc_initial
        s = state_vector(obs, soc_ref, self.t_dem_scale, self.soc_scale)
        return agent_commands(self._mode, [ag.act(s) for ag in self.agents_], getattr(self, "u_mot2_constant", 1.0))

    def predict(self, X) -> np.ndarray:
        """Greedy ``(u_mot1, u_mot2)`` for rows of raw ``[T_dem, SoC]``."""
        check_is_fitted(self, "agents_")
        X = check_array(X, dtype=float)
        if X.shape[1] != 2:
            raise ValueError(f"expected observations with 2 columns [T_dem, SoC], got {X.shape[1]}")
        return np.array([self.policy(Observation(t, soc)) for t, soc in X])

    def evaluate(self, cycle: DriveCycle, soc_initial: float | None = None, trace_path=None) -> EpisodeMetrics:
        """Exploration-free rollout over ``cycle``; the SoC reference follows
        the evaluation's initial SoC unless a fixed one is configured."""
        check_is_fitted(self, "agents_")
        soc0 = self.soc_initial if soc_initial is None else soc_initial
        ref = self.soc_ref if self.soc_ref is not None else soc0
        env = HevEnv(self._model(), t_dem_scale=self.t_dem_scale, record_trace=trace_path is not None)
        obs = env.reset(cycle, soc0)
        while not env.done:
            obs = env.step(self.policy(obs, ref)).observation
        if trace_path is not None:
            env.write_trace(trace_path)
        return env.finalize()

    def save(self, directory) -> None:
        check_is_fitted(self, "agents_")
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for ag in self.agents_:
            ag.save(d / ag.name)

    def load(self, directory):
        d = Path(directory)
        self.agents_ = [DDPGAgent.load(d / f"agent{i + 1}") for i in range(self.n_agents)]
        return self


class MultiAgentEMS(_DDPGEnergyManager):
    """Two hand-shaking DDPG agents: agent 1 commands MG1, agent 2 commands MG2."""

    _mode = ControlMode.MULTI

    def __init__(self, relevance_ratio=0.2, episodes=100, soc_initial=0.28, agent_config=None,
                 power_weight=3e-7, soc_weight_active=2.0, soc_ref=None, global_power_unit=1.2e6,
                 seed=0, bridge_seconds=3, t_dem_scale=1500.0, soc_scale=0.05, model=None):
        self.relevance_ratio = relevance_ratio
        self.episodes = episodes
        self.soc_initial = soc_initial
        self.agent_config = agent_config
        self.power_weight = power_weight
        self.soc_weight_active = soc_weight_active
        self.soc_ref = soc_ref
        self.global_power_unit = global_power_unit
        self.seed = seed
        self.bridge_seconds = bridge_seconds
        self.t_dem_scale = t_dem_scale
        self.soc_scale = soc_scale
        self.model = model


class SingleAgentEMS(_DDPGEnergyManager):
    """One DDPG agent on MG1; the MG2 command is held at ``u_mot2_constant``."""

    _mode = ControlMode.SINGLE

    def __init__(self, u_mot2_constant=1.0, episodes=100, soc_initial=0.28, agent_config=None,
                 power_weight=3e-7, soc_weight_active=2.0, soc_ref=None, global_power_unit=1.2e6,
                 seed=0, bridge_seconds=3, t_dem_scale=1500.0, soc_scale=0.05, model=None):
        self.u_mot2_constant = u_mot2_constant
        self.episodes = episodes
        self.soc_initial = soc_initial
        self.agent_config = agent_config
        self.power_weight = power_weight
        self.soc_weight_active = soc_weight_active
        self.soc_ref = soc_ref
        self.global_power_unit = global_power_unit
        self.seed = seed
        self.bridge_seconds = bridge_seconds
        self.t_dem_scale = t_dem_scale
        self.soc_scale = soc_scale
        self.model = model
