"""Adversarial image perturbations and the user-versus-recogniser privacy game."""

from .aip import AttackConfig, SelectiveConfig, VaccinationSpec, attack_config, craft, craft_selective, scaled_eps
from .classifier import Dataset, LossSpec, Model, ModelSpec, TrainConfig, accuracy, generate_synthetic_dataset, train
from .errors import (
    DegenerateGeometry,
    FixtureError,
    InvalidArgument,
    ParseError,
    SolverError,
    UnsupportedSize,
    UnsupportedStrategy,
)
from .game import GameSolution, MixedStrategy, PayoffMatrix, solve_deterministic, solve_minimax, verify_saddle
from .processing import ProcessingConfig, ProcessingStrategy, ensemble_scores, strategy
from .tensor import SeededRng

__version__ = "0.1.0"
