"""Anchor-lattice local planner over depth images.

A fixed 3x5 grid of direction anchors is scored and refined by a small
attention network; candidate trajectories are closed-form quintics graded
by a structured cost against a pillar-forest world. The package carries the
whole loop: autodiff core, network, world simulator with depth rendering,
receding-horizon flight harness, self-supervised training, and a CLI.
"""

__version__ = "0.1.0"

from .autodiff import NumericsError, Parameter, Tensor, backward, grad_check, no_grad
from .costs import CostWeights, structured_cost
from .geometry import build_lattice, decode_terminal
from .harness import EpisodeConfig, run_benchmark, run_episode
from .layers import ParameterStore, load_weights, save_weights
from .network import PlannerConfig, PlannerNet, init_weights
from .trajectory import Pose, duration_rule, solve_quintic
from .training import TrainConfig, collect_dataset, evaluate_regret, train
from .world import CameraModel, PillarWorld, generate_world, load_world, render_depth, save_world

__all__ = [
    "NumericsError", "Parameter", "Tensor", "backward", "grad_check",
    "no_grad", "CostWeights", "structured_cost", "build_lattice",
    "decode_terminal", "EpisodeConfig", "run_benchmark", "run_episode",
    "ParameterStore", "load_weights", "save_weights", "PlannerConfig",
    "PlannerNet", "init_weights", "Pose", "duration_rule", "solve_quintic",
    "TrainConfig", "collect_dataset", "evaluate_regret", "train",
    "CameraModel", "PillarWorld", "generate_world", "load_world",
    "render_depth", "save_world", "__version__",
]
