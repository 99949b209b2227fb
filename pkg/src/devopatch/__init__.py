"""DevoPatch: decision-based black-box adversarial patch attacks driven by
integer-domain differential evolution.

The engine searches for the smallest rectangular patch, copied from a target
image, that flips a hard-label classifier's prediction, using label queries
only.
"""

from .engine import (
    AttackResult,
    AttackTrace,
    EngineConfig,
    Population,
    crossover,
    init_population,
    mutate,
    repair,
    run_attack,
)
from .errors import ConfigError, DimensionMismatch, InitializationFailure, OracleFailure
from .fitness import INFEASIBLE, FitnessScore, Norm, SuccessPredicate, distance, fitness
from .images import Image, decode_png, encode_png, load_image, save_png
from .metrics import (
    AttackPair,
    AttackRecord,
    ExperimentReport,
    ExperimentSpec,
    aggregate,
    area_percent,
    run_experiment,
)
from .oracle import (
    ConstantLabelOracle,
    DominantChannelOracle,
    HttpOracle,
    LabelOracle,
    QuadrantMaxOracle,
    ScriptedOracle,
    SubprocessOracle,
    ThresholdCoverageOracle,
    make_oracle,
)
from .patch import Candidate, apply_patch, make_mask, patch_pixel_area

__version__ = "0.1.0"

__all__ = [
    "AttackPair",
    "AttackRecord",
    "AttackResult",
    "AttackTrace",
    "Candidate",
    "ConfigError",
    "ConstantLabelOracle",
    "DimensionMismatch",
    "DominantChannelOracle",
    "EngineConfig",
    "ExperimentReport",
    "ExperimentSpec",
    "FitnessScore",
    "HttpOracle",
    "Image",
    "INFEASIBLE",
    "InitializationFailure",
    "LabelOracle",
    "Norm",
    "OracleFailure",
    "Population",
    "QuadrantMaxOracle",
    "ScriptedOracle",
    "SubprocessOracle",
    "SuccessPredicate",
    "ThresholdCoverageOracle",
    "aggregate",
    "apply_patch",
    "area_percent",
    "crossover",
    "decode_png",
    "distance",
    "encode_png",
    "fitness",
    "init_population",
    "load_image",
    "make_mask",
    "make_oracle",
    "mutate",
    "patch_pixel_area",
    "repair",
    "run_attack",
    "run_experiment",
    "save_png",
]
