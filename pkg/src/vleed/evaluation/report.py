"""Assemble the metrics report for one released representation."""
from __future__ import annotations

import json
import warnings
from importlib import resources

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..synthdata import EmbeddingStore, _genuine_candidates, make_pairs
from .fairness import fairness_report
from .probes import PROBE_KINDS, ProbeConfig, majority_baseline, probe_accuracy, train_probe
from .verification import ScoreSet, eer_threshold, roc_points, tmr_at_fmr, verification_scores


class EvalConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    train_fraction: float = Field(0.8, gt=0, lt=1)
    num_genuine: int = Field(1000, ge=1)
    num_impostor: int = Field(10000, ge=1)
    fmr_targets: tuple[float, ...] = (1e-3, 1e-1)
    probe_kinds: tuple[str, ...] = PROBE_KINDS
    probe: ProbeConfig = ProbeConfig()


def report_schema() -> dict:
    text = resources.files("vleed").joinpath("schemas/metrics_report.schema.json").read_text()
    return json.loads(text)


def pair_budget(store: EmbeddingStore, cfg: EvalConfig) -> tuple[int, int]:
    """Requested pair counts clipped to what the store can provide."""
    n = len(store)
    genuine = len(_genuine_candidates(store.identity_ids))
    impostor = n * (n - 1) // 2 - genuine
    return min(cfg.num_genuine, genuine), min(cfg.num_impostor, impostor)


def evaluate(train: EmbeddingStore, held: EmbeddingStore, cfg: EvalConfig, pair_seed: int,
             transform: str) -> tuple[dict, ScoreSet]:
    """Leakage, verification and fairness metrics for already-transformed stores.

    Probes are fitted on ``train`` and scored on ``held``; verification and
    fairness use pairs drawn from ``held``.
    """
    probe_cfg = cfg.probe
    probes = {}
    for kind in cfg.probe_kinds:
        probe = train_probe(kind, train.vectors, train.labels, probe_cfg, train.num_classes)
        probes[kind] = {"eval_accuracy": probe_accuracy(probe, held.vectors, held.labels),
                        "train_accuracy": probe_accuracy(probe, train.vectors, train.labels)}
    mean_acc = float(np.mean([p["eval_accuracy"] for p in probes.values()])) if probes else None

    n_gen, n_imp = pair_budget(held, cfg)
    pairs = make_pairs(held, n_gen, n_imp, pair_seed)
    scores = verification_scores(held.vectors, pairs)
    roc = roc_points(scores)
    eer = eer_threshold(scores)
    points, fairness = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for target in cfg.fmr_targets:
            op = tmr_at_fmr(scores, target)
            points.append({"achieved_fmr": op.achieved_fmr, "fmr_target": target,
                           "quantized": op.quantized, "threshold": op.threshold,
                           "tmr": op.tmr})
            fairness.append(fairness_report(scores, target).to_dict())

    report = {
        "transform": transform,
        "verification": {"auc": roc.auc, "eer": eer.eer, "eer_threshold": eer.threshold,
                         "num_genuine": int(scores.genuine.size),
                         "num_impostor": int(scores.impostor.size),
                         "operating_points": points},
        "leakage": {"majority_baseline_eval": majority_baseline(held.labels),
                    "majority_baseline_train": majority_baseline(train.labels),
                    "mean_probe_accuracy": mean_acc,
                    "leakage_reduction": None if mean_acc is None else 1.0 - mean_acc,
                    "probes": probes},
        "fairness": fairness,
    }
    return report, scores
