"""Blind-spot discovery for simulator-trained tabular agents."""
from .aggregation import aggregate, dawid_skene
from .config import ExperimentConfig, load_config
from .envs import make_env_pair
from .evaluation import make_split, oil_run, weighted_f1
from .experiment import compare_conditions, run_experiment
from .feedback import collect
from .model import BlindSpotModel, load_model, save_model, train_model
from .oracle import ground_truth_blind_spots, make_oracle
from .tabular import QLearningParams, greedy_policy, train_q, value_iteration

__version__ = "0.1.0"

__all__ = [
    "aggregate",
    "dawid_skene",
    "ExperimentConfig",
    "load_config",
    "make_env_pair",
    "make_split",
    "oil_run",
    "weighted_f1",
    "compare_conditions",
    "run_experiment",
    "collect",
    "BlindSpotModel",
    "load_model",
    "save_model",
    "train_model",
    "ground_truth_blind_spots",
    "make_oracle",
    "QLearningParams",
    "greedy_policy",
    "train_q",
    "value_iteration",
]
