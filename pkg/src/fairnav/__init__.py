"""Multi-agent goal-coverage simulator with fairness-aware goal assignment."""

from .assignment import (
    Assignment,
    CostMatrix,
    assign_minmax_fair,
    assign_optimal,
    assign_random,
    brute_force_assign,
    build_cost_matrix,
)
from .dynamics import StepOutcome, detect_collisions, step
from .fairness import FairnessConfig, FairnessSnapshot, RewardBreakdown, fairness_metric, fairness_reward, total_reward
from .formation import FormationSpec, expected_positions, formation_success
from .runner import Experiment, run_batch, run_episode
from .world import Action, ScenarioConfig, Wall, WorldConfig, WorldState, init_world

__version__ = "0.1.0"
