"""Leakage probes, verification metrics and fairness metrics."""
from .fairness import FairnessReport, fairness_report, gini_fmr, group_fmr
from .probes import (PROBE_KINDS, Probe, ProbeConfig, majority_baseline, probe_accuracy,
                     train_probe)
from .report import EvalConfig, evaluate, report_schema
from .verification import (EerResult, OperatingPoint, RocCurve, ScoreSet, eer_threshold,
                           roc_points, tmr_at_fmr, verification_scores, write_scores_csv)

__all__ = [
    "FairnessReport", "fairness_report", "gini_fmr", "group_fmr", "PROBE_KINDS", "Probe",
    "ProbeConfig", "majority_baseline", "probe_accuracy", "train_probe", "EvalConfig",
    "evaluate", "report_schema", "EerResult", "OperatingPoint", "RocCurve", "ScoreSet",
    "eer_threshold", "roc_points", "tmr_at_fmr", "verification_scores", "write_scores_csv",
]
