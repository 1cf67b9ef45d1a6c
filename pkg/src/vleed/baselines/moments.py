"""Batch moment matching across attribute groups (PFRNet / ASPECD style)."""
from __future__ import annotations

import logging
from itertools import combinations

import numpy as np

from ..errors import ContractError
from ..numgrad import Tensor, as_tensor

log = logging.getLogger(__name__)


def moments_available(labels, num_classes: int) -> bool:
    """True when every class 1..num_classes has at least two samples."""
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=num_classes + 1)[1:]
    return bool(np.all(counts >= 2))


def moment_loss(z, labels, order: int = 4, num_classes: int | None = None) -> Tensor:
    """Sum over m <= order and class pairs of squared differences of raw moments.

    The m-th moment of a class is the per-coordinate mean of ``z**m`` over
    its rows. A batch in which some class has fewer than two rows
    contributes zero (with a warning).
    """
    if order < 1:
        raise ContractError("moment order must be >= 1")
    z = as_tensor(z)
    labels = np.asarray(labels, dtype=np.int64)
    if num_classes is None:
        num_classes = int(labels.max())
    if not moments_available(labels, num_classes):
        log.warning("moment_loss: a class has fewer than two samples; term skipped")
        return Tensor(0.0)
    rows = [z[np.flatnonzero(labels == k)] for k in range(1, num_classes + 1)]
    total = Tensor(0.0)
    for m in range(1, order + 1):
        moments = [(r ** m).mean(axis=0) if m > 1 else r.mean(axis=0) for r in rows]
        for a, b in combinations(moments, 2):
            diff = a - b
            total = total + (diff * diff).sum()
    return total
