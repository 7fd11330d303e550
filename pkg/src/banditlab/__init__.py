"""banditlab: field-test K-armed bandit policies with human or simulated raters."""

from .catalog import Catalog, CatalogItem, load_catalog, make_synthetic_catalog
from .config import ExperimentConfig, load_config
from .datasets import ParticipantTrajectory, TrajectoryDataset, load_dataset, save_dataset
from .policies import PolicyState, PullHistory, cycle_sequence, repeat_sequence
from .sessions import BackgroundProfile, Session, SurveyResult

__version__ = "0.1.0"

__all__ = [
    "Catalog",
    "CatalogItem",
    "ExperimentConfig",
    "ParticipantTrajectory",
    "PolicyState",
    "PullHistory",
    "Session",
    "SurveyResult",
    "BackgroundProfile",
    "TrajectoryDataset",
    "cycle_sequence",
    "repeat_sequence",
    "load_catalog",
    "load_config",
    "load_dataset",
    "save_dataset",
    "make_synthetic_catalog",
    "__version__",
]
