"""Experiment configuration, comparison metrics and report emission.

A run trains the learning controllers (or loads their checkpoints),
evaluates every configured controller with exploration off on each
(cycle, initial SoC) pair, and writes plain-text artifacts: learning curves,
episode traces, a comparison table and a manifest. Reports carry no
timestamps so repeated runs with one seed are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .agent import AgentConfig
from .baselines import EcmsConfig, EcmsController, RuleBasedConfig, RuleBasedController
from .coordinator import MultiAgentEMS, SingleAgentEMS
from .cycles import DEFAULT_PHASE_WINDOWS, build_learning_cycle, default_phases, resolve_cycle
from .errors import ConfigError, ZeroBaseline, ZeroInitialSoc
from .plant import PowertrainModel

log = logging.getLogger(__name__)

CONTROLLERS = ("RuleBased", "Ecms", "SingleAgent", "MultiAgent")
LEARNERS = ("SingleAgent", "MultiAgent")
COMPARISON_COLUMNS = ("cycle", "initial_soc", "method", "end_soc", "soc_error_percent",
                      "fuel_l_per_100km", "saving_percent")
REPORT_SCHEMA = "comparison/1"


def soc_error(soc_initial: float, soc_end: float) -> float:
    """``|SoC_end - SoC_initial| / SoC_initial * 100``."""
    if soc_initial <= 0:
        raise ZeroInitialSoc(f"initial SoC must be positive, got {soc_initial}")
    return abs(soc_end - soc_initial) / soc_initial * 100.0


def fuel_saving(baseline_fuel: float, candidate_fuel: float) -> float:
    """Signed saving of ``candidate`` relative to ``baseline`` in percent."""
    if baseline_fuel <= 0:
        raise ZeroBaseline(f"baseline fuel must be positive, got {baseline_fuel}")
    return (baseline_fuel - candidate_fuel) / baseline_fuel * 100.0


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    controllers: list = field(default_factory=lambda: ["MultiAgent"])
    plant: str | None = None                 # YAML plant parameter file
    maps: dict = field(default_factory=dict)  # engine / mg1 / mg2 map files
    eval_cycles: list = field(default_factory=lambda: ["learning"])
    phase_windows: dict | None = None         # label -> [cycle, start, end]
    bridge_seconds: int = 3
    eval_order_seed: int = 1000
    agent: dict = field(default_factory=dict)
    reward: dict = field(default_factory=dict)
    relevance_ratio: float = 0.2
    u_mot2_constant: float = 1.0
    train_soc: float = 0.28
    initial_socs: list = field(default_factory=lambda: [0.25, 0.28, 0.30])
    episodes: int = 100
    seeds: list = field(default_factory=lambda: [0])
    rule_based: dict = field(default_factory=dict)
    ecms: dict = field(default_factory=dict)
    saving_baseline: str = "RuleBased"
    checkpoint: str | None = None             # load learners from here instead of training
    write_traces: bool = True
    out: str = "runs/experiment"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        bad = [c for c in self.controllers if c not in CONTROLLERS]
        if bad or not self.controllers:
            raise ConfigError(f"controllers must be drawn from {CONTROLLERS}, got {self.controllers}")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if not self.initial_socs:
            raise ConfigError("initial SoC list is empty")
        if self.episodes < 0:
            raise ConfigError("episodes must be non-negative")
        if not 0.0 <= self.relevance_ratio <= 1.0:
            raise ConfigError("relevance_ratio must lie in [0, 1]")
        unknown_maps = set(self.maps) - {"engine", "mg1", "mg2"}
        if unknown_maps:
            raise ConfigError(f"unknown map keys {sorted(unknown_maps)}")
        for path in [self.plant, *self.maps.values()]:
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"referenced file does not exist: {path}")
        if self.checkpoint is not None and not Path(self.checkpoint).is_dir():
            raise ConfigError(f"checkpoint directory does not exist: {self.checkpoint}")
        AgentConfig.from_dict(self.agent)

    @classmethod
    def from_dict(cls, data: dict | None) -> "ExperimentConfig":
        data = dict(data or {})
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown experiment config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, **changes) -> "ExperimentConfig":
        data = self.to_dict()
        data.update({k: v for k, v in changes.items() if v is not None})
        return ExperimentConfig.from_dict(data)

    def hash(self) -> str:
        """Digest of everything that affects results (the output directory excluded)."""
        data = self.to_dict()
        data.pop("out")
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()[:16]


def load_config(path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return ExperimentConfig.from_dict(data)


# ---------------------------------------------------------------------------
# building blocks


def build_model(config: ExperimentConfig) -> PowertrainModel:
    if config.plant is None and not config.maps:
        return PowertrainModel.default()
    return PowertrainModel.from_files(config.plant, config.maps.get("engine"),
                                      config.maps.get("mg1"), config.maps.get("mg2"))


def phases_for(config: ExperimentConfig):
    windows = config.phase_windows or DEFAULT_PHASE_WINDOWS
    return default_phases({k: tuple(v) for k, v in windows.items()})


def eval_cycle(config: ExperimentConfig, ref: str):
    if ref == "learning":
        return build_learning_cycle(phases_for(config), seed=config.eval_order_seed,
                                    bridge_seconds=config.bridge_seconds)
    return resolve_cycle(ref)


def make_learner(kind: str, config: ExperimentConfig, seed: int, model: PowertrainModel):
    common = dict(episodes=config.episodes, soc_initial=config.train_soc, agent_config=dict(config.agent),
                  seed=seed, bridge_seconds=config.bridge_seconds, model=model, **config.reward)
    if kind == "MultiAgent":
        return MultiAgentEMS(relevance_ratio=config.relevance_ratio, **common)
    return SingleAgentEMS(u_mot2_constant=config.u_mot2_constant, **common)


def make_baseline(kind: str, config: ExperimentConfig, model: PowertrainModel):
    if kind == "RuleBased":
        data = dict(config.rule_based)
        if "sweet_spot" in data and data["sweet_spot"] is not None:
            data["sweet_spot"] = tuple(data["sweet_spot"])
        return RuleBasedController(RuleBasedConfig(**data), model)
    return EcmsController(EcmsConfig(**config.ecms), model)


@dataclass(frozen=True)
class ComparisonRow:
    cycle: str
    initial_soc: float
    method: str
    end_soc: float
    soc_error: float
    fuel: float | None
    saving: float | None

    def cells(self) -> list[str]:
        return [self.cycle, f"{self.initial_soc:.4g}", self.method, f"{self.end_soc:.6f}",
                f"{self.soc_error:.4f}", _opt(self.fuel, "{:.6f}"), _opt(self.saving, "{:.4f}")]


def _opt(x, fmt: str) -> str:
    return "NA" if x is None else fmt.format(x)


def comparison_rows(results: dict, baseline: str) -> list[ComparisonRow]:
    """``results[(cycle, soc, method)]`` holds per-seed (end SoC, fuel) pairs;
    seeds are averaged and savings computed against ``baseline``."""
    rows = []
    mean = {}
    for key, runs in results.items():
        ends = [r[0] for r in runs]
        fuels = [r[1] for r in runs]
        fuel = None if any(f is None for f in fuels) else float(np.mean(fuels))
        mean[key] = (float(np.mean(ends)), fuel)
    for (cycle, soc, method), (end, fuel) in mean.items():
        base = mean.get((cycle, soc, baseline))
        saving = None
        if base is not None and base[1] is not None and fuel is not None:
            saving = fuel_saving(base[1], fuel)
        rows.append(ComparisonRow(cycle, soc, method, end, soc_error(soc, end), fuel, saving))
    order = {m: i for i, m in enumerate(CONTROLLERS)}
    rows.sort(key=lambda r: (r.cycle, r.initial_soc, order.get(r.method, 99), r.method))
    return rows


def format_comparison(rows) -> str:
    lines = [f"# schema: {REPORT_SCHEMA}", "\t".join(COMPARISON_COLUMNS)]
    lines += ["\t".join(r.cells()) for r in rows]
    return "\n".join(lines) + "\n"


@dataclass
class ExperimentResult:
    rows: list
    histories: dict     # (method, seed) -> LearningHistory
    out: Path
    files: list


def run_experiment(config: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """Train or load learners, evaluate all controllers, and write artifacts."""
    out = Path(config.out)
    if write:
        out.mkdir(parents=True, exist_ok=True)
    model = build_model(config)
    cycles = [(ref, eval_cycle(config, ref)) for ref in config.eval_cycles]
    results: dict = {}
    histories = {}
    files = []

    def artifact(name: str) -> Path:
        files.append(name)
        return out / name

    for kind in config.controllers:
        seeds = config.seeds if kind in LEARNERS else config.seeds[:1]  # baselines are deterministic
        for seed in seeds:
            if kind in LEARNERS:
                ctrl = make_learner(kind, config, seed, model)
                if config.checkpoint is not None:
                    ctrl.load(Path(config.checkpoint) / kind / f"seed{seed}")
                else:
                    log.info("training %s seed %d for %d episodes", kind, seed, config.episodes)
                    ctrl.fit(phases_for(config))
                    histories[(kind, seed)] = ctrl.history_
                    if write:
                        ctrl.history_.write(artifact(f"learning_{kind}_seed{seed}.tsv"))
                        ctrl.save(out / "checkpoints" / kind / f"seed{seed}")
            else:
                ctrl = make_baseline(kind, config, model)
            for ref, cycle in cycles:
                for soc in config.initial_socs:
                    trace = None
                    if write and config.write_traces:
                        trace = artifact(f"trace_{kind}_{cycle.name}_soc{soc:g}_seed{seed}.tsv")
                    m = ctrl.evaluate(cycle, soc, trace_path=trace)
                    results.setdefault((cycle.name, float(soc), kind), []).append((m.soc_end, m.fuel_l_per_100km))
    rows = comparison_rows(results, config.saving_baseline)
    if write:
        artifact("comparison.tsv").write_text(format_comparison(rows))
        settings = config.to_dict()
        settings.pop("out")  # keeps runs comparable across output directories
        manifest = {
            "config": settings,
            "config_hash": config.hash(),
            "files": sorted(files),
            "seeds": list(config.seeds),
            "version": __version__,
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return ExperimentResult(rows, histories, out, sorted(files))
