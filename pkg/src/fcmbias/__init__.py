"""Implicit-bias auditing of tabular classifiers with fuzzy cognitive maps.

A random forest is explained with Shapley values; the absolute attributions
seed a fuzzy cognitive map whose weights are pairwise feature associations.
Protected features that gain activation during the simulation carry bias
the attributions alone do not show.
"""

from .association import AssociationMatrix, build_association_matrix
from .audit import run_audit
from .config import AuditConfig, load_config
from .dataset import Dataset, load_csv, load_schema, stratified_split
from .fcm import SimulationConfig, eigen_diagnostics, reasoning_step, simulate, transfer
from .forest import ForestConfig, ForestModel, fit_forest, tune
from .shapley import BackgroundSet, exact_shapley, global_shap, kernel_shap

__version__ = "0.1.0"

__all__ = [
    "AssociationMatrix",
    "AuditConfig",
    "BackgroundSet",
    "Dataset",
    "ForestConfig",
    "ForestModel",
    "SimulationConfig",
    "build_association_matrix",
    "eigen_diagnostics",
    "exact_shapley",
    "fit_forest",
    "global_shap",
    "kernel_shap",
    "load_config",
    "load_csv",
    "load_schema",
    "reasoning_step",
    "run_audit",
    "simulate",
    "stratified_split",
    "transfer",
    "tune",
]
