"""Bagged depth-limited Gini trees, used only for impurity-based importance."""
from __future__ import annotations

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class ForestConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_trees: int = Field(50, ge=1)
    max_depth: int = Field(4, ge=1)
    min_samples_split: int = Field(2, ge=2)
    bootstrap: bool = True
    seed: int = 0


def gini(counts: np.ndarray) -> np.ndarray:
    """Gini impurity of class-count vectors along the last axis."""
    total = counts.sum(axis=-1, keepdims=True)
    p = counts / np.maximum(total, 1)
    return 1.0 - (p * p).sum(axis=-1)


def _best_split(x: np.ndarray, onehot: np.ndarray, features: np.ndarray):
    """Best (feature, threshold, weighted child impurity) over ``features``."""
    n = len(x)
    total = onehot.sum(axis=0)
    best = (None, None, np.inf)
    for f in features:
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        valid = np.flatnonzero(xs[:-1] < xs[1:])
        if valid.size == 0:
            continue
        left = np.cumsum(onehot[order], axis=0)[valid]
        right = total - left
        n_left = valid + 1.0
        child = (n_left * gini(left) + (n - n_left) * gini(right)) / n
        k = int(np.argmin(child))
        if child[k] < best[2]:
            i = valid[k]
            best = (int(f), 0.5 * (xs[i] + xs[i + 1]), float(child[k]))
    return best


def _grow(x, onehot, depth, cfg, rng, importance, n_root):
    counts = onehot.sum(axis=0)
    node_impurity = float(gini(counts))
    if depth >= cfg.max_depth or len(x) < cfg.min_samples_split or node_impurity == 0.0:
        return
    d = x.shape[1]
    k = max(1, int(np.sqrt(d)))
    features = rng.choice(d, size=k, replace=False)
    f, threshold, child = _best_split(x, onehot, features)
    if f is None:
        return
    importance[f] += len(x) / n_root * (node_impurity - child)
    mask = x[:, f] <= threshold
    _grow(x[mask], onehot[mask], depth + 1, cfg, rng, importance, n_root)
    _grow(x[~mask], onehot[~mask], depth + 1, cfg, rng, importance, n_root)


def forest_importance(x, y, num_classes: int, config: ForestConfig | None = None) -> np.ndarray:
    """Total Gini decrease per coordinate summed over the ensemble, normalised.

    ``y`` holds 0-based class indices. Each tree gets its own seed derived
    from ``config.seed``, so the result does not depend on tree order.
    """
    cfg = config or ForestConfig()
    x = np.asarray(x, dtype=np.float64)
    onehot = np.eye(num_classes)[np.asarray(y)]
    importance = np.zeros(x.shape[1])
    for child_seed in np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees):
        rng = np.random.Generator(np.random.PCG64(child_seed))
        rows = rng.integers(0, len(x), len(x)) if cfg.bootstrap else np.arange(len(x))
        _grow(x[rows], onehot[rows], 0, cfg, rng, importance, len(rows))
    total = importance.sum()
    if total <= 0:
        return np.full(x.shape[1], 1.0 / x.shape[1])
    return importance / total
