"""Per-group false match rates and their Gini coefficient."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from .verification import ScoreSet, tmr_at_fmr

log = logging.getLogger(__name__)


@dataclass
class FairnessReport:
    per_group_fmr: dict
    gini: float
    threshold_used: float
    system_fmr_target: float

    def to_dict(self) -> dict:
        return {"gini": self.gini, "per_group_fmr": {str(k): v for k, v in
                                                      sorted(self.per_group_fmr.items())},
                "system_fmr_target": self.system_fmr_target,
                "threshold_used": self.threshold_used}


def group_fmr(scores_by_group: dict, threshold: float) -> dict:
    """Fraction of each group's impostor scores at or above ``threshold``."""
    out = {}
    for group, values in scores_by_group.items():
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            log.warning("group %s has no impostor scores; omitted", group)
            continue
        out[group] = float(np.mean(values >= threshold))
    return out


def gini_fmr(fmrs) -> float:
    """Sample-corrected Gini coefficient of per-group FMRs; 0 when all are zero."""
    f = np.asarray(fmrs, dtype=np.float64).ravel()
    n = f.size
    if n < 2:
        raise ContractError("Gini needs at least two groups")
    if np.any(f < 0):
        raise ContractError("FMRs must be non-negative")
    mean = f.mean()
    if mean == 0:
        return 0.0
    pairwise = np.abs(f[:, None] - f[None, :]).sum()
    return float(n / (n - 1) * pairwise / (2 * n * n * mean))


def fairness_report(scores: ScoreSet, fmr_target: float) -> FairnessReport:
    """Gini over intra-group impostor FMRs at the system-wide threshold."""
    if scores.impostor_group is None:
        raise ContractError("score set carries no group tags")
    threshold = tmr_at_fmr(scores, fmr_target).threshold
    groups = sorted(int(g) for g in np.unique(scores.impostor_group) if g != 0)
    per_group = group_fmr({g: scores.impostor[scores.impostor_group == g] for g in groups},
                          threshold)
    gini = gini_fmr(list(per_group.values())) if len(per_group) >= 2 else 0.0
    return FairnessReport(per_group, gini, threshold, fmr_target)
