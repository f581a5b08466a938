"""A single DDPG actor-critic learner: replay memory, OU exploration,
TD targets from target networks, and soft target tracking."""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import BufferTooSmall, ConfigError, NonFiniteLoss
from .nn import (
    Adam,
    DenseNetwork,
    actor_objective_and_grad,
    critic_loss_and_grad,
    load_network,
    mlp_sizes,
    save_network,
    soft_update,
)


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent named random stream derived from one root seed."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool

    def __post_init__(self):
        finite = (
            np.all(np.isfinite(self.state))
            and np.all(np.isfinite(self.action))
            and np.isfinite(self.reward)
            and np.all(np.isfinite(self.next_state))
        )
        if not finite:
            raise ValueError("transition has non-finite components")


class ReplayBuffer:
    """Fixed-capacity ring memory with FIFO eviction and uniform sampling."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int, rng=None):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.states = np.zeros((self.capacity, state_dim))
        self.actions = np.zeros((self.capacity, action_dim))
        self.rewards = np.zeros(self.capacity)
        self.next_states = np.zeros((self.capacity, state_dim))
        self.dones = np.zeros(self.capacity)
        self.size = 0
        self._next = 0
        self.rng = rng if rng is not None else np.random.default_rng()

    def __len__(self) -> int:
        return self.size

    def add(self, state, action, reward, next_state, done) -> None:
        i = self._next
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.dones[i] = float(done)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def remember(self, t: Transition) -> None:
        self.add(t.state, t.action, t.reward, t.next_state, t.done)

    def sample(self, n: int):
        """``n`` draws with replacement: (states, actions, rewards, next_states, dones)."""
        if self.size < n or n < 1:
            raise BufferTooSmall(f"buffer holds {self.size} transitions, need {n}")
        idx = self.rng.integers(0, self.size, size=n)
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx], self.dones[idx]

    def transitions(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        start = self._next if self.size == self.capacity else 0
        order = [(start + k) % self.capacity for k in range(self.size)]
        return [
            Transition(self.states[i].copy(), self.actions[i].copy(), float(self.rewards[i]),
                       self.next_states[i].copy(), bool(self.dones[i]))
            for i in order
        ]


class OUNoise:
    """Euler-discretized Ornstein-Uhlenbeck process ``da = -decay*a*dt + sigma*dW``."""

    def __init__(self, size: int = 1, decay: float = 0.2, sigma: float = 0.1, dt: float = 1.0,
                 rng=None, x0=0.0):
        if decay <= 0:
            raise ConfigError("OU decay rate must be positive")
        if sigma < 0:
            raise ConfigError("OU sigma must be non-negative")
        self.size = size
        self.decay = decay
        self.sigma = sigma
        self.dt = dt
        self.x0 = x0
        self.rng = rng if rng is not None else np.random.default_rng()
        self.reset()

    def reset(self) -> None:
        self.state = np.full(self.size, float(self.x0))

    def sample(self) -> np.ndarray:
        self.state = (
            self.state * (1.0 - self.decay * self.dt)
            + self.sigma * np.sqrt(self.dt) * self.rng.standard_normal(self.size)
        )
        return self.state.copy()

    def chain(self, n: int) -> np.ndarray:
        """``n`` successive samples, shape (n, size)."""
        rho = 1.0 - self.decay * self.dt
        shocks = self.sigma * np.sqrt(self.dt) * self.rng.standard_normal((n, self.size))
        out = np.empty((n, self.size))
        x = self.state
        for k in range(n):
            x = x * rho + shocks[k]
            out[k] = x
        self.state = x.copy()
        return out

    def stationary_variance(self) -> float:
        rho = 1.0 - self.decay * self.dt
        return self.sigma ** 2 * self.dt / (1.0 - rho ** 2)


def ou_step(noise: OUNoise) -> np.ndarray:
    return noise.sample()


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.99
    batch_size: int = 64
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    regularization: float = 1e-4
    tau: float = 0.005
    ou_decay: float = 0.2
    ou_sigma: float = 0.1
    noise_anneal_episodes: int = 0  # 0 keeps the noise scale fixed
    actor_layers: int = 3
    critic_layers: int = 3
    hidden_width: int = 64
    buffer_capacity: int = 100_000
    warmup_steps: int = 1000
    update_cadence: str = "step"  # "step" or "episode"
    updates_per_episode: int = 0  # episode cadence; 0 means one per collected step

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        if self.batch_size < 1 or self.batch_size >= self.buffer_capacity:
            raise ConfigError("need 1 <= batch_size << buffer_capacity")
        if not 2 <= self.critic_layers <= 7 or self.actor_layers < 2:
            raise ConfigError("critic depth must be 2-7 layers, actor depth >= 2")
        if self.update_cadence not in ("step", "episode"):
            raise ConfigError("update_cadence must be 'step' or 'episode'")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError("tau must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict | None) -> "AgentConfig":
        data = dict(data or {})
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown agent config keys: {sorted(unknown)}")
        return cls(**data)


class DDPGAgent:
    """Actor ``pi(s)`` in (-1, 1)^action_dim and critic ``Q(s, a)``.

    Actions stored in the replay memory are actor-space values; mapping to
    actuator ranges happens outside the agent.
    """

    def __init__(self, state_dim: int, action_dim: int, config: AgentConfig | None = None,
                 seed: int = 0, name: str = "agent"):
        self.config = config or AgentConfig()
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.name = name
        self.seed = seed
        c = self.config
        init_rng = substream(seed, f"init/{name}")
        self.actor = DenseNetwork(mlp_sizes(state_dim, action_dim, c.actor_layers, c.hidden_width),
                                  "tanh", init_rng)
        self.critic = DenseNetwork(mlp_sizes(state_dim + action_dim, 1, c.critic_layers, c.hidden_width),
                                   "linear", init_rng)
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_opt = Adam(self.actor.n_params, c.actor_lr)
        self.critic_opt = Adam(self.critic.n_params, c.critic_lr)
        self.buffer = ReplayBuffer(c.buffer_capacity, state_dim, action_dim,
                                   substream(seed, f"minibatch/{name}"))
        self.noise = OUNoise(action_dim, c.ou_decay, c.ou_sigma, 1.0, substream(seed, f"noise/{name}"))
        self.noise_scale = 1.0
        self.updates = 0

    # -- acting ---------------------------------------------------------------
    def act(self, state, explore: bool = False) -> np.ndarray:
        a = self.actor.forward(state)
        if explore:
            a = a + self.noise_scale * self.noise.sample()
        return np.clip(a, -1.0, 1.0)

    def act_batch(self, states) -> np.ndarray:
        return self.actor.forward(np.atleast_2d(states))

    def begin_episode(self, episode: int = 0) -> None:
        self.noise.reset()
        n = self.config.noise_anneal_episodes
        self.noise_scale = max(0.0, 1.0 - episode / n) if n else 1.0

    # -- memory ---------------------------------------------------------------
    def remember(self, state, action, reward, next_state, done) -> None:
        self.buffer.add(state, action, reward, next_state, done)

    def sample_minibatch(self, n: int | None = None):
        return self.buffer.sample(n or self.config.batch_size)

    # -- learning ---------------------------------------------------------------
    def td_targets(self, rewards, next_states, dones) -> np.ndarray:
        """``r + gamma * Q'(s', pi'(s'))`` from the target networks, zero bootstrap at done."""
        gamma = self.config.gamma
        if gamma == 0.0:
            return np.asarray(rewards, dtype=float).copy()
        next_a = self.target_actor.forward(next_states)
        q_next = self.target_critic.forward(np.hstack([next_states, next_a]))[:, 0]
        return rewards + gamma * (1.0 - dones) * q_next

    def update_on_batch(self, batch) -> dict:
        """One critic step, one actor step and target tracking on a given batch."""
        c = self.config
        states, actions, rewards, next_states, dones = batch
        y = self.td_targets(rewards, next_states, dones)
        critic_loss, g_critic = critic_loss_and_grad(self.critic, states, actions, y, c.regularization)
        self.critic_opt.step(self.critic.params, g_critic)
        actor_obj, g_actor = actor_objective_and_grad(self.actor, self.critic, states, c.regularization)
        self.actor_opt.step(self.actor.params, g_actor)
        soft_update(self.target_critic, self.critic, c.tau)
        soft_update(self.target_actor, self.actor, c.tau)
        self.updates += 1
        if not (np.all(np.isfinite(self.critic.params)) and np.all(np.isfinite(self.actor.params))):
            raise NonFiniteLoss(f"{self.name}: parameters diverged after update {self.updates}")
        return {"critic_loss": critic_loss, "actor_objective": actor_obj}

    def train_step(self) -> dict:
        return self.update_on_batch(self.sample_minibatch())

    # -- persistence ----------------------------------------------------------
    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_network(self.actor, d / "actor.bin")
        save_network(self.critic, d / "critic.bin")
        save_network(self.target_actor, d / "target_actor.bin")
        save_network(self.target_critic, d / "target_critic.bin")
        for label, opt in (("actor", self.actor_opt), ("critic", self.critic_opt)):
            st = opt.state_dict()
            np.save(d / f"{label}_opt_m.npy", st.pop("m"))
            np.save(d / f"{label}_opt_v.npy", st.pop("v"))
            (d / f"{label}_opt.json").write_text(json.dumps(st, sort_keys=True))
        meta = {
            "name": self.name,
            "seed": self.seed,
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "config": self.config.to_dict(),
            "updates": self.updates,
            "buffer": {"size": self.buffer.size, "capacity": self.buffer.capacity},
            "rng": {
                "minibatch": self.buffer.rng.bit_generator.state,
                "noise": self.noise.rng.bit_generator.state,
            },
            "noise_state": self.noise.state.tolist(),
        }
        (d / "agent.json").write_text(json.dumps(meta, sort_keys=True, indent=1))

    @classmethod
    def load(cls, directory) -> "DDPGAgent":
        d = Path(directory)
        meta = json.loads((d / "agent.json").read_text())
        agent = cls(meta["state_dim"], meta["action_dim"], AgentConfig.from_dict(meta["config"]),
                    seed=meta["seed"], name=meta["name"])
        agent.actor = load_network(d / "actor.bin")
        agent.critic = load_network(d / "critic.bin")
        agent.target_actor = load_network(d / "target_actor.bin")
        agent.target_critic = load_network(d / "target_critic.bin")
        for label, opt in (("actor", agent.actor_opt), ("critic", agent.critic_opt)):
            st = json.loads((d / f"{label}_opt.json").read_text())
            st["m"] = np.load(d / f"{label}_opt_m.npy")
            st["v"] = np.load(d / f"{label}_opt_v.npy")
            opt.load_state_dict(st)
        agent.updates = meta["updates"]
        agent.buffer.rng.bit_generator.state = meta["rng"]["minibatch"]
        agent.noise.rng.bit_generator.state = meta["rng"]["noise"]
        agent.noise.state = np.array(meta["noise_state"], dtype=float)
        return agent
