"""Fit / release / evaluate / sweep, shared by the CLI and the acceptance tests."""
from __future__ import annotations

import csv
import io
import json
import logging
from pathlib import Path

import numpy as np

from . import container
from .baselines import DimRanking, ProjectionOp, inlp_apply, inlp_fit, ive_apply, ive_rank
from .config import RunConfig
from .errors import ConfigError, FormatError, VleedError
from .evaluation import evaluate
from .model import VleedModel, infer_release
from .synthdata import EmbeddingStore, generate, split
from .training import train_vleed

log = logging.getLogger(__name__)

FIT_METHODS = ("vleed", "pfrnet", "inlp", "ive")
ARTIFACT_NAMES = {"vleed": "model.ckpt", "pfrnet": "model.ckpt", "inlp": "inlp.proj",
                  "ive": "ive.rank"}


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def synthesize(run: RunConfig) -> EmbeddingStore:
    return generate(run.synth)


def split_store(run: RunConfig, store: EmbeddingStore):
    return split(store, run.eval.train_fraction, run.seed)


def fit(run: RunConfig, train: EmbeddingStore, method: str):
    """Fit a disentanglement method on the training split.

    Returns ``(artifact, trace)``; ``trace`` is None for the baselines.
    """
    if method in ("vleed", "pfrnet"):
        return train_vleed(train.vectors, train.labels, run.vleed, run.train, method)
    if method == "inlp":
        return inlp_fit(train.vectors, train.labels, config=run.inlp), None
    if method == "ive":
        return ive_rank(train.vectors, train.labels, run.ive), None
    raise ConfigError(f"unknown method {method!r}; expected one of {FIT_METHODS}")


def release(artifact, run: RunConfig, x: np.ndarray) -> np.ndarray:
    if artifact is None:
        return np.asarray(x, dtype=np.float64)
    if isinstance(artifact, VleedModel):
        return infer_release(artifact, x)
    if isinstance(artifact, ProjectionOp):
        return inlp_apply(artifact, x)
    if isinstance(artifact, DimRanking):
        return ive_apply(artifact, run.ive.n_e, x)
    raise TypeError(f"cannot release with {type(artifact).__name__}")


def transform_name(artifact, method: str | None = None) -> str:
    if artifact is None:
        return "identity"
    if isinstance(artifact, VleedModel):
        return method if method in ("vleed", "pfrnet") else "vleed"
    return "inlp" if isinstance(artifact, ProjectionOp) else "ive"


def save_artifact(artifact, path) -> None:
    artifact.save(path)


def load_artifact(path):
    """Load a checkpoint or baseline artifact; ``identity``/``baseline`` mean no transform."""
    if str(path) in ("identity", "baseline"):
        return None
    magic = container.sniff(path)
    if magic == container.MODEL_MAGIC:
        return VleedModel.load(path)
    if magic == container.PROJECTION_MAGIC:
        return ProjectionOp.load(path)
    if magic == container.RANKING_MAGIC:
        return DimRanking.load(path)
    raise FormatError(f"{path}: not a model checkpoint or baseline artifact")


def evaluate_artifact(run: RunConfig, store: EmbeddingStore, artifact, name: str):
    """Apply the transform to both splits and compute the metrics report."""
    train, held = split_store(run, store)
    train_z = train.with_vectors(release(artifact, run, train.vectors))
    held_z = held.with_vectors(release(artifact, run, held.vectors))
    report, scores = evaluate(train_z, held_z, run.eval, run.seed + 1, name)
    report["config_hash"] = run.config_hash()
    return report, scores


def _row(lam: float, report: dict) -> dict:
    row = {"lambda": lam}
    for op in report["verification"]["operating_points"]:
        row[f"tmr@fmr={op['fmr_target']:g}"] = op["tmr"]
    row["auc"] = report["verification"]["auc"]
    row["eer_threshold"] = report["verification"]["eer_threshold"]
    for kind, acc in report["leakage"]["probes"].items():
        row[f"acc_{kind}"] = acc["eval_accuracy"]
    row["majority_baseline"] = report["leakage"]["majority_baseline_eval"]
    row["leakage_reduction"] = report["leakage"]["leakage_reduction"]
    for fair in report["fairness"]:
        row[f"gini@fmr={fair['system_fmr_target']:g}"] = fair["gini"]
    return row


def sweep(run: RunConfig, store: EmbeddingStore, lambdas=None, method: str = "vleed",
          include_baseline: bool = True) -> dict:
    """Train and evaluate one model per disentanglement weight, ascending."""
    if method not in ("vleed", "pfrnet"):
        raise ConfigError(f"sweep supports vleed or pfrnet, not {method!r}")
    lambdas = sorted(float(v) for v in (lambdas if lambdas is not None else run.sweep_lambdas))
    if not lambdas or lambdas[0] < 0:
        raise ConfigError("lambda list must be non-empty and non-negative")
    train, _ = split_store(run, store)
    members = []
    for lam in lambdas:
        member_run = run.with_lambda(lam)
        try:
            model, trace = fit(member_run, train, method)
            report, _ = evaluate_artifact(member_run, store, model, method)
        except VleedError as exc:
            raise type(exc)(f"sweep member lambda={lam:g} failed: {exc}") from exc
        members.append({"lambda": lam, "report": report,
                        "trace": trace.to_dict(timing=False)})
        log.info("lambda=%g done", lam)
    out = {"config_hash": run.config_hash(), "method": method, "members": members}
    if include_baseline:
        out["baseline"], _ = evaluate_artifact(run, store, None, "identity")
    return out


def sweep_rows(result: dict) -> list[dict]:
    return [_row(m["lambda"], m["report"]) for m in result["members"]]


def rows_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(float(v)) if isinstance(v, float) else v
                        for k, v in row.items()})
    return buf.getvalue()


def write_text(path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
