"""
Core components for the policy optimization laboratory.
"""

from .config import Config
from .utils import RandomStreams, Utils
from .policy import Policy, TabularSoftmaxPolicy, LinearGaussianPolicy, build_policy, policy_for_mdp
from .mdp import load_benchmark, load_mdp, random_mdp, sample_batch, sample_trajectory
from .optimizers import (
    DeterministicProblem,
    EnumerationProblem,
    PolicyOptimizationProblem,
    SopoOptimizer,
)
from .schedules import theory_schedule

__all__ = [
    'Config',
    'RandomStreams',
    'Utils',
    'Policy',
    'TabularSoftmaxPolicy',
    'LinearGaussianPolicy',
    'build_policy',
    'policy_for_mdp',
    'load_benchmark',
    'load_mdp',
    'random_mdp',
    'sample_batch',
    'sample_trajectory',
    'DeterministicProblem',
    'EnumerationProblem',
    'PolicyOptimizationProblem',
    'SopoOptimizer',
    'theory_schedule',
]
