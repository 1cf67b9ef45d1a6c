"""Independent oracles shared by the unit and acceptance tests."""
from __future__ import annotations

import numpy as np

from vleed.baselines import moment_loss
from vleed.model import (cross_entropy, loss_classifier, loss_disentangle, loss_kl_class,
                         loss_kl_residual, loss_reconstruction)
from vleed.numgrad import Parameter, exp, l2_normalize, softmax

FD_STEP = 1e-5
FD_TOL = 1e-4


# finite differences

def numeric_grad(fn, params: list[Parameter], h: float = FD_STEP) -> list[np.ndarray]:
    """Central differences of the scalar ``fn()`` w.r.t. each parameter entry."""
    out = []
    for p in params:
        g = np.zeros_like(p.data)
        flat, gflat = p.data.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = float(fn().data)
            flat[i] = old - h
            down = float(fn().data)
            flat[i] = old
            gflat[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def relative_error(analytic: list[np.ndarray], numeric: list[np.ndarray]) -> float:
    a = np.concatenate([g.ravel() for g in analytic])
    n = np.concatenate([g.ravel() for g in numeric])
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-10)
    return float(np.linalg.norm(a - n) / scale)


def _labels(rng, n, k):
    lab = rng.integers(1, k + 1, size=n)
    lab[:k] = np.arange(1, k + 1)  # every class present
    return rng.permutation(lab)


# One builder per loss: returns (closure computing the loss, parameters).
# Parameters live in unconstrained coordinates (pre-normalisation vectors,
# log-sigmas, logits) so finite-difference steps keep every precondition.

def case_rec(rng):
    n, d = rng.integers(1, 6), rng.integers(2, 7)
    x = rng.standard_normal((n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    v = Parameter(rng.standard_normal((n, d)))
    return (lambda: loss_reconstruction(x, l2_normalize(v))), [v]


def case_kl_r(rng):
    n, d = rng.integers(1, 6), rng.integers(1, 6)
    mu, s = Parameter(rng.standard_normal((n, d))), Parameter(rng.normal(0, 0.5, (n, d)))
    return (lambda: loss_kl_residual(mu, exp(s))), [mu, s]


def case_kl_c(rng):
    n, d, k = rng.integers(2, 6), rng.integers(1, 5), rng.integers(2, 4)
    mu, s = Parameter(rng.standard_normal((n, d))), Parameter(rng.normal(0, 0.5, (n, d)))
    prior = Parameter(rng.standard_normal((k, d)))
    lab = _labels(rng, max(n, k), k)[:n]
    return (lambda: loss_kl_class(mu, exp(s), prior, lab)), [mu, s, prior]


def case_dis(rng):
    n, k = rng.integers(1, 6), rng.integers(2, 5)
    logits = Parameter(rng.standard_normal((n, k)))
    return (lambda: loss_disentangle(softmax(logits))), [logits]


def case_clf(rng):
    n, k = rng.integers(1, 6), rng.integers(2, 5)
    logits = Parameter(rng.standard_normal((n, k)))
    lab = rng.integers(1, k + 1, size=n)
    return (lambda: loss_classifier(softmax(logits), lab)), [logits]


def case_clf_logits(rng):
    n, k = rng.integers(1, 6), rng.integers(2, 5)
    logits = Parameter(rng.standard_normal((n, k)))
    lab = rng.integers(1, k + 1, size=n)
    return (lambda: cross_entropy(logits, lab)), [logits]


def case_moment(rng):
    k = int(rng.integers(2, 4))
    n, d = int(rng.integers(2 * k, 10)), int(rng.integers(1, 4))
    lab = _labels(rng, n, k)
    while np.bincount(lab, minlength=k + 1)[1:].min() < 2:
        lab = _labels(rng, n, k)
    z = Parameter(rng.normal(0, 0.7, (n, d)))
    return (lambda: moment_loss(z, lab, 4, k)), [z]


GRADIENT_CASES = {
    "L_rec": case_rec,
    "L_KL_r": case_kl_r,
    "L_KL_c": case_kl_c,
    "L_dis": case_dis,
    "L_clf": case_clf,
    "L_clf_from_logits": case_clf_logits,
    "moment_loss": case_moment,
}


def gradient_errors(name: str, instances: int = 20, seed: int = 0) -> list[float]:
    from vleed.numgrad import backward
    rng = np.random.default_rng(seed)
    errors = []
    for _ in range(instances):
        fn, params = GRADIENT_CASES[name](rng)
        errors.append(relative_error(backward(fn(), params), numeric_grad(fn, params)))
    return errors


# brute-force verification oracles

def brute_tmr_at_fmr(genuine, impostor, target):
    """O(n^2): try every impostor score (and one point above the max) as threshold."""
    genuine, impostor = list(map(float, genuine)), list(map(float, impostor))
    top = float(np.nextafter(max(impostor), np.inf))
    best = None
    for t in impostor + [top]:
        fmr = sum(s >= t for s in impostor) / len(impostor)
        if fmr <= target and (best is None or t < best):
            best = t
    tmr = sum(s >= best for s in genuine) / len(genuine)
    return tmr, best


def brute_eer(genuine, impostor):
    """Scan every adjacent pair of the merged grid; linear interpolation inside each."""
    genuine, impostor = np.asarray(genuine, float), np.asarray(impostor, float)
    grid = sorted(set(genuine.tolist()) | set(impostor.tolist()))
    grid.append(float(np.nextafter(grid[-1], np.inf)))

    def rates(t):
        return float(np.mean(impostor >= t)), float(np.mean(genuine < t))

    best = None  # (|gap|, threshold, eer)
    for a, b in zip(grid[:-1], grid[1:]):
        (fa, ra), (fb, rb) = rates(a), rates(b)
        da, db = fa - ra, fb - rb
        cands = [(a, fa, ra), (b, fb, rb)]
        if da > 0 > db:
            w = da / (da - db)
            cands.append((a + w * (b - a), fa + w * (fb - fa), ra + w * (rb - ra)))
        for t, f, r in cands:
            key = (abs(f - r), t)
            if best is None or key < best[:2]:
                best = (abs(f - r), t, (f + r) / 2)
    if len(grid) == 1:
        f, r = rates(grid[0])
        best = (abs(f - r), grid[0], (f + r) / 2)
    return best[2], best[1]


def dense_grid_eer(genuine, impostor, points: int = 10_000):
    """Unsmoothed EER on an evenly spaced threshold grid."""
    genuine, impostor = np.asarray(genuine, float), np.asarray(impostor, float)
    lo = min(genuine.min(), impostor.min())
    hi = max(genuine.max(), impostor.max())
    grid = np.linspace(lo, np.nextafter(hi, np.inf), points)
    fmr = (impostor[None, :] >= grid[:, None]).mean(axis=1)
    fnmr = (genuine[None, :] < grid[:, None]).mean(axis=1)
    i = int(np.argmin(np.abs(fmr - fnmr)))
    return (fmr[i] + fnmr[i]) / 2


def random_score_set(rng, lo: int = 10, hi: int = 500):
    """Sizes in [lo, hi]; some sets use coarse rounding to force ties."""
    ng, ni = int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1))
    shift = rng.uniform(0, 1.5)
    g = rng.normal(shift, 1.0, ng)
    i = rng.normal(0.0, 1.0, ni)
    if rng.random() < 0.4:
        g, i = np.round(g, 1), np.round(i, 1)
    return np.clip(g / 3, -1, 1), np.clip(i / 3, -1, 1)


# planted datasets

def planted_coordinate(rng, n: int = 400, d: int = 4, coord: int = 0, mirrored: bool = True):
    """Unit rows whose labels are carried by one coordinate only.

    With ``mirrored`` every row has a twin whose planted coordinate is
    negated and whose label is flipped, so the other coordinates carry no
    label information at all, even by chance.
    """
    half = n // 2 if mirrored else n
    x = rng.standard_normal((half, d))
    lab = rng.integers(1, 3, size=half)
    x[:, coord] = np.where(lab == 1, 1.0, -1.0) * rng.uniform(0.5, 1.5, half)
    if mirrored:
        twin = x.copy()
        twin[:, coord] *= -1
        x = np.vstack([x, twin])
        lab = np.concatenate([lab, 3 - lab])
    return x / np.linalg.norm(x, axis=1, keepdims=True), lab
