"""Multi-mode PHEV energy management with hand-shaking multi-agent DDPG."""

__version__ = "0.1.0"

from .agent import AgentConfig, DDPGAgent
from .baselines import EcmsController, RuleBasedController, dp_oracle
from .coordinator import MultiAgentEMS, RewardWeights, SingleAgentEMS
from .cycles import DriveCycle, build_learning_cycle, default_phases, load_cycle
from .env import HevEnv
from .harness import ExperimentConfig, fuel_saving, run_experiment, soc_error
from .plant import PlantParameters, PowertrainModel
from .sensitivity import SettingProjector, pca_project, sensitivity_level

__all__ = [
    "AgentConfig", "DDPGAgent", "DriveCycle", "EcmsController", "ExperimentConfig", "HevEnv",
    "MultiAgentEMS", "PlantParameters", "PowertrainModel", "RewardWeights", "RuleBasedController",
    "SettingProjector", "SingleAgentEMS", "build_learning_cycle", "default_phases", "dp_oracle",
    "fuel_saving", "load_cycle", "pca_project", "run_experiment", "sensitivity_level", "soc_error",
]
