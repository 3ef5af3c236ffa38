"""Differentially private tabular data synthesis and disparate-impact auditing.

Three generative models (a Bayesian-network synthesizer, a WGAN with noisy
clipped critic gradients, and a teacher-ensemble GAN) share a fit/sample
estimator API; a harness sweeps them over privacy budgets and imbalance
levels and audits how class and subgroup shares, precision, recall, and
accuracy respond.
"""

from .accounting import MomentsAccountant
from .classifier import LrModel, MetricsReport, evaluate, train_dp_lr, train_lr
from .data import (
    OneHotEncoding,
    TabularDataset,
    balance_class_within_subgroup,
    class_distribution,
    discretize,
    extract_subgroups,
    imbalance_subgroup,
    load_csv,
    save_csv,
    subgroup_rows,
)
from .harness import AuditReport, ExperimentConfig, run_experiment
from .mechanisms import exponential_mechanism, gaussian_noise, laplace_mechanism
from .pategan import PateGanSynthesizer
from .privbayes import PrivBayesSynthesizer, mutual_information
from .report import emit_report
from .schema import Column, Schema, SubgroupKey
from .wgan import DpWganSynthesizer

__version__ = "0.1.0"

__all__ = [
    "AuditReport",
    "Column",
    "DpWganSynthesizer",
    "ExperimentConfig",
    "LrModel",
    "MetricsReport",
    "MomentsAccountant",
    "OneHotEncoding",
    "PateGanSynthesizer",
    "PrivBayesSynthesizer",
    "Schema",
    "SubgroupKey",
    "TabularDataset",
    "balance_class_within_subgroup",
    "class_distribution",
    "discretize",
    "emit_report",
    "evaluate",
    "exponential_mechanism",
    "extract_subgroups",
    "gaussian_noise",
    "imbalance_subgroup",
    "laplace_mechanism",
    "load_csv",
    "mutual_information",
    "run_experiment",
    "save_csv",
    "subgroup_rows",
    "train_dp_lr",
    "train_lr",
]
