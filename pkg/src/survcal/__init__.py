"""Pseudo-observation regression with multicalibration under covariate shift."""

from survcal._backend import BACKEND
from survcal.data import TARGET, SchemaError, SurvivalDataset, read_csv, to_csv
from survcal.mcboost import AdditivePredictor, AuditTrace, CalibrationConfig, Halt, calibrate
from survcal.metrics import c_index
from survcal.shift import fit_propensity, ipsw_estimate, ipsw_multisource, naive_estimate
from survcal.survival import (
    FunctionalKind,
    PseudoMatrix,
    TargetFunctional,
    compute_pseudo,
    kaplan_meier,
    pseudo_ipcw,
    pseudo_jackknife,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "TARGET", "SchemaError", "SurvivalDataset", "read_csv", "to_csv",
    "AdditivePredictor", "AuditTrace", "CalibrationConfig", "Halt", "calibrate", "c_index",
    "fit_propensity", "ipsw_estimate", "ipsw_multisource", "naive_estimate",
    "FunctionalKind", "PseudoMatrix", "TargetFunctional", "compute_pseudo", "kaplan_meier",
    "pseudo_ipcw", "pseudo_jackknife",
]
