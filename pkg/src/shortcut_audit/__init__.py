"""Audit tabular datasets for shortcut attributes.

An attribute is a shortcut risk when it is both useful (informative about the
label) and detectable (recoverable from the model inputs). Both are measured
as chance-adjusted mutual information.
"""
from .audit import AuditReport, AuditSettings, AttributeAudit, compute_utility, detect_conditioned, \
    detect_unconditioned, plan_folds, run_audit
from .calibration import CalibrationConfig, inject_synthetic, make_counterfactual, run_calibration
from .dataset import CategoricalSeries, ColumnSchema, Dataset, DatasetError, encode_features, load_csv
from .infotheory import AmiScore, ContingencyTable, adjusted_mi, contingency, entropy, expected_mi, \
    mutual_information
from .metrics import accuracy, auc, macro_f1
from .models import FAMILIES, PredictorSpec, fit
from .split_probe import ProbeResult, correlate_detectability, split_probe

__version__ = "0.1.0"
