"""Uncertainty-aware social bot detection.

Two relational-graph views of the same accounts are trained under a
divergence objective, each view gets a Dirichlet evidence head that
reports per-account uncertainty, and final labels come from whichever
view is more certain.
"""

from .config import PROFILES, RunConfig, from_profile, parse_config_file
from .errors import (
    ConfigError,
    ContractError,
    DataError,
    DegenerateDataError,
    DomainError,
    EvibotError,
    IntegrityError,
    NumericError,
    ShapeError,
    exit_code_for,
)
from .evidential import (
    DirichletOutput,
    EvidenceHead,
    FusedPrediction,
    evidence_forward,
    fuse_predictions,
    train_uncertainty,
    uncertainty_loss,
)
from .graph import HeteroGraph, load_graph, save_graph
from .metrics import CalibrationReport, Metrics, calibration_report, evaluate_metrics
from .pipeline import RunResult, StageError, ablation_run, ablation_table, run_pipeline
from .rgcn import EnvironmentModel, init_environment, rgcn_forward, train_environments
from .synth import SyntheticSpec, generate_synthetic, synthesize

__version__ = "0.1.0"

__all__ = [
    "CalibrationReport",
    "ConfigError",
    "ContractError",
    "DataError",
    "DegenerateDataError",
    "DirichletOutput",
    "DomainError",
    "EnvironmentModel",
    "EvibotError",
    "EvidenceHead",
    "FusedPrediction",
    "HeteroGraph",
    "IntegrityError",
    "Metrics",
    "NumericError",
    "PROFILES",
    "RunConfig",
    "RunResult",
    "ShapeError",
    "StageError",
    "SyntheticSpec",
    "ablation_run",
    "ablation_table",
    "calibration_report",
    "evaluate_metrics",
    "evidence_forward",
    "exit_code_for",
    "from_profile",
    "fuse_predictions",
    "generate_synthetic",
    "init_environment",
    "load_graph",
    "parse_config_file",
    "rgcn_forward",
    "run_pipeline",
    "save_graph",
    "synthesize",
    "train_environments",
    "train_uncertainty",
    "uncertainty_loss",
    "__version__",
]
