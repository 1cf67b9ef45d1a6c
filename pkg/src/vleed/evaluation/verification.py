"""Cosine verification scores, TMR at fixed FMR, ROC/AUC and EER.

A comparison counts as a match when ``score >= threshold``.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..errors import ContractError
from ..synthdata import PairList


@dataclass
class ScoreSet:
    genuine: np.ndarray
    impostor: np.ndarray
    genuine_group: np.ndarray | None = None
    impostor_group: np.ndarray | None = None

    def __post_init__(self):
        self.genuine = np.asarray(self.genuine, dtype=np.float64).ravel()
        self.impostor = np.asarray(self.impostor, dtype=np.float64).ravel()

    def swapped(self) -> "ScoreSet":
        return ScoreSet(self.impostor, self.genuine, self.impostor_group, self.genuine_group)


class OperatingPoint(NamedTuple):
    tmr: float
    threshold: float
    achieved_fmr: float
    quantized: bool


class RocCurve(NamedTuple):
    fmr: np.ndarray
    tmr: np.ndarray
    thresholds: np.ndarray
    auc: float


class EerResult(NamedTuple):
    eer: float
    threshold: float


def verification_scores(embeddings, pairs: PairList) -> ScoreSet:
    e = np.asarray(embeddings, dtype=np.float64)
    idx = np.concatenate([pairs.first, pairs.second])
    if idx.size and (idx.min() < 0 or idx.max() >= len(e)):
        raise ContractError("pair list references an embedding that does not exist")
    s = np.clip(np.einsum("ij,ij->i", e[pairs.first], e[pairs.second]), -1.0, 1.0)
    g = pairs.genuine
    return ScoreSet(s[g], s[~g], pairs.group[g], pairs.group[~g])


def _above(t: float) -> float:
    return float(np.nextafter(t, np.inf))


def _check_nonempty(scores: ScoreSet) -> None:
    if scores.genuine.size == 0 or scores.impostor.size == 0:
        raise ContractError("genuine and impostor score lists must both be non-empty")


def tmr_at_fmr(scores: ScoreSet, fmr_target: float) -> OperatingPoint:
    """Smallest impostor-score threshold whose FMR does not exceed the target.

    Candidates are the distinct impostor scores plus one point just above the
    largest (where FMR is 0). ``quantized`` flags impostor lists too short
    to resolve the target.
    """
    if not 0.0 < fmr_target < 1.0:
        raise ContractError("fmr_target must lie in (0, 1)")
    _check_nonempty(scores)
    imp = np.sort(scores.impostor)
    n = imp.size
    candidates = np.append(np.unique(imp), _above(imp[-1]))
    fmr = (n - np.searchsorted(imp, candidates, side="left")) / n
    k = int(np.argmax(fmr <= fmr_target))
    t = float(candidates[k])
    quantized = n < 1.0 / fmr_target
    if quantized:
        warnings.warn(f"{n} impostor scores cannot resolve FMR {fmr_target:g}", stacklevel=2)
    return OperatingPoint(float(np.mean(scores.genuine >= t)), t, float(fmr[k]), quantized)


def roc_points(scores: ScoreSet) -> RocCurve:
    """ROC at every distinct score, ordered by increasing threshold."""
    _check_nonempty(scores)
    allsc = np.concatenate([scores.genuine, scores.impostor])
    thresholds = np.unique(allsc)
    thresholds = np.append(thresholds, _above(thresholds[-1]))
    gen, imp = np.sort(scores.genuine), np.sort(scores.impostor)
    tmr = (gen.size - np.searchsorted(gen, thresholds, side="left")) / gen.size
    fmr = (imp.size - np.searchsorted(imp, thresholds, side="left")) / imp.size
    x, y = fmr[::-1], tmr[::-1]
    auc = float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))
    return RocCurve(fmr, tmr, thresholds, auc)


def eer_threshold(scores: ScoreSet) -> EerResult:
    """Threshold where FMR and FNMR cross, interpolated linearly on the score grid."""
    _check_nonempty(scores)
    grid = np.unique(np.concatenate([scores.genuine, scores.impostor]))
    grid = np.append(grid, _above(grid[-1]))
    gen, imp = np.sort(scores.genuine), np.sort(scores.impostor)
    fmr = (imp.size - np.searchsorted(imp, grid, side="left")) / imp.size
    fnmr = np.searchsorted(gen, grid, side="left") / gen.size
    diff = fmr - fnmr
    i = int(np.argmax(diff <= 0))
    if diff[i] == 0 or i == 0:
        return EerResult(float((fmr[i] + fnmr[i]) / 2), float(grid[i]))
    w = diff[i - 1] / (diff[i - 1] - diff[i])
    t = grid[i - 1] + w * (grid[i] - grid[i - 1])
    f = fmr[i - 1] + w * (fmr[i] - fmr[i - 1])
    r = fnmr[i - 1] + w * (fnmr[i] - fnmr[i - 1])
    return EerResult(float((f + r) / 2), float(t))


def write_scores_csv(scores: ScoreSet, path) -> None:
    """Columns ``pair_type, group, score``; group is the shared label or ``inter``."""
    def rows(kind, values, groups):
        groups = groups if groups is not None else np.zeros(len(values), dtype=np.int64)
        for v, g in zip(values, groups):
            yield kind, str(int(g)) if g else "inter", repr(float(v))

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pair_type", "group", "score"])
        w.writerows(rows("genuine", scores.genuine, scores.genuine_group))
        w.writerows(rows("impostor", scores.impostor, scores.impostor_group))
