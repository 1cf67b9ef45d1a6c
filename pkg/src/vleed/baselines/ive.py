"""Variable elimination: zero the coordinates a tree ensemble finds most predictive."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .. import container
from ..errors import ConfigError, ContractError, NumericError
from .forest import ForestConfig, forest_importance
from .pca import pca_fit


class IveConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    forest: ForestConfig = ForestConfig()
    space: Literal["raw", "pca"] = "raw"
    n_e: int = Field(8, ge=0)
    # None ranks once; an int re-fits after removing that many coordinates
    refit_step: int | None = Field(None, ge=1)


@dataclass
class DimRanking:
    """Coordinates by descending importance (0-based indices)."""

    ordering: np.ndarray
    importance: np.ndarray
    space: str = "raw"
    pca_basis: np.ndarray | None = None

    def to_space(self, x: np.ndarray) -> np.ndarray:
        return x @ self.pca_basis if self.space == "pca" else x

    def from_space(self, z: np.ndarray) -> np.ndarray:
        return z @ self.pca_basis.T if self.space == "pca" else z

    def save(self, path) -> None:
        tensors = [("ordering", self.ordering.astype(np.float64)),
                   ("importance", self.importance)]
        if self.pca_basis is not None:
            tensors.append(("pca_basis", self.pca_basis))
        container.save(path, container.RANKING_MAGIC, {"kind": "ive", "space": self.space},
                       tensors)

    @classmethod
    def load(cls, path) -> "DimRanking":
        meta, t = container.load(path, container.RANKING_MAGIC)
        return cls(t["ordering"].astype(np.int64), t["importance"], meta["space"],
                    t.get("pca_basis"))


def ive_rank(x, labels, config: IveConfig | None = None) -> DimRanking:
    cfg = config or IveConfig()
    x = np.asarray(x, dtype=np.float64)
    classes, y = np.unique(np.asarray(labels), return_inverse=True)
    if len(classes) < 2:
        raise ConfigError("IVE needs at least two classes")
    basis = None
    if cfg.space == "pca":
        # a pure rotation; trees are translation invariant so centring is moot
        basis = pca_fit(x).basis
        x = x @ basis
    importance = forest_importance(x, y, len(classes), cfg.forest)
    if cfg.refit_step is None:
        ordering = np.argsort(-importance, kind="stable")
    else:
        ordering = _iterative_ordering(x, y, len(classes), cfg, importance)
    return DimRanking(ordering, importance, cfg.space, basis)


def _iterative_ordering(x, y, num_classes, cfg, importance):
    d = x.shape[1]
    removed: list[int] = []
    current = x.copy()
    imp = importance
    while len(removed) < d:
        remaining = [i for i in np.argsort(-imp, kind="stable") if i not in removed]
        take = remaining[:cfg.refit_step]
        removed += [int(i) for i in take]
        current[:, take] = 0.0
        if len(removed) < d:
            imp = forest_importance(current, y, num_classes, cfg.forest)
    return np.array(removed, dtype=np.int64)


def ive_apply(ranking: DimRanking, n_e: int, x) -> np.ndarray:
    """Zero the top ``n_e`` ranked coordinates and renormalise."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    d = len(ranking.ordering)
    if not 0 <= n_e <= d:
        raise ContractError(f"n_e must lie in [0, {d}], got {n_e}")
    if x.shape[1] != d:
        raise ContractError(f"expected {d}-d rows, got {x.shape[1]}")
    if n_e == 0:
        return x / np.linalg.norm(x, axis=1, keepdims=True)
    z = ranking.to_space(x).copy()
    z[:, ranking.ordering[:n_e]] = 0.0
    out = ranking.from_space(z)
    norms = np.linalg.norm(out, axis=1, keepdims=True)
    if n_e == d or np.any(norms < 1e-12):
        raise NumericError("all information eliminated; result has zero norm")
    return out / norms
