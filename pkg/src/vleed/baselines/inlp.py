"""Iterative nullspace projection.

Repeatedly fit a bias-free linear softmax classifier for the attribute and
project the embeddings onto the nullspace of its weight vectors, until the
retrained classifier is no better than the majority class (plus a margin).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .. import container
from ..errors import ConfigError, ContractError, NumericError


class InlpConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    max_iters: int = Field(50, ge=1)
    stop_margin: float = Field(0.02, ge=0)
    grad_tol: float = Field(1e-6, gt=0)
    max_steps: int = Field(5000, ge=1)
    lr: float = Field(1.0, gt=0)


@dataclass
class ProjectionOp:
    matrix: np.ndarray
    iterations_used: int

    def save(self, path) -> None:
        container.save(path, container.PROJECTION_MAGIC,
                       {"iterations_used": self.iterations_used, "kind": "inlp"},
                       [("matrix", self.matrix)])

    @classmethod
    def load(cls, path) -> "ProjectionOp":
        meta, tensors = container.load(path, container.PROJECTION_MAGIC)
        return cls(tensors["matrix"], int(meta["iterations_used"]))


def fit_linear_softmax(x: np.ndarray, y: np.ndarray, num_classes: int,
                       grad_tol: float = 1e-6, max_steps: int = 5000,
                       lr: float = 1.0) -> np.ndarray:
    """Bias-free softmax regression by full-batch gradient descent from zero.

    ``y`` holds 0-based class indices. Returns a ``(d, K)`` weight matrix.
    """
    n, d = x.shape
    onehot = np.eye(num_classes)[y]
    w = np.zeros((d, num_classes))
    for _ in range(max_steps):
        logits = x @ w
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        grad = x.T @ (p - onehot) / n
        if np.linalg.norm(grad) < grad_tol:
            break
        w -= lr * grad
    return w


def linear_accuracy(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    return float(np.mean((x @ w).argmax(axis=1) == y))


def majority_fraction(labels) -> float:
    _, counts = np.unique(np.asarray(labels), return_counts=True)
    return float(counts.max() / counts.sum())


def inlp_fit(x, labels, max_iters: int = 50, stop_margin: float = 0.02,
             config: InlpConfig | None = None) -> ProjectionOp:
    cfg = config or InlpConfig(max_iters=max_iters, stop_margin=stop_margin)
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    classes, y = np.unique(labels, return_inverse=True)
    if len(classes) < 2:
        raise ConfigError("INLP needs at least two classes")
    if np.allclose(x, x[0]):
        raise ConfigError("INLP got degenerate data: all rows identical")
    d = x.shape[1]
    target = majority_fraction(labels) + cfg.stop_margin
    basis = np.zeros((d, 0))
    projection = np.eye(d)
    iterations = 0
    while True:
        current = x @ projection
        w = fit_linear_softmax(current, y, len(classes), cfg.grad_tol, cfg.max_steps, cfg.lr)
        if linear_accuracy(current, y, w) <= target or iterations >= cfg.max_iters:
            break
        stacked = np.hstack([basis, projection @ w])
        u, s, _ = np.linalg.svd(stacked, full_matrices=False)
        basis = u[:, s > 1e-10 * s.max()]
        projection = np.eye(d) - basis @ basis.T
        iterations += 1
    return ProjectionOp(projection, iterations)


def inlp_apply(op: ProjectionOp, x) -> np.ndarray:
    """Project rows of ``x`` and renormalise to unit length."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != op.matrix.shape[0]:
        raise ContractError(f"expected {op.matrix.shape[0]}-d rows, got {x.shape[1]}")
    out = x @ op.matrix
    norms = np.linalg.norm(out, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise NumericError("projected embedding has zero norm")
    return out / norms
