"""Acceptance gate. Each test is tagged with the criterion it covers; a summary
line per criterion is printed at the end of the session."""
import json
import math
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from helpers import (FD_TOL, GRADIENT_CASES, brute_eer, brute_tmr_at_fmr, gradient_errors,
                     planted_coordinate, random_score_set)
from vleed import pipeline
from vleed.baselines import (ForestConfig, InlpConfig, IveConfig, fit_linear_softmax,
                             inlp_apply, inlp_fit, ive_rank, linear_accuracy,
                             majority_fraction)
from vleed.cli import main
from vleed.config import load_config
from vleed.evaluation import ScoreSet, eer_threshold, gini_fmr, tmr_at_fmr
from vleed.model import (VleedConfig, VleedModel, loss_disentangle, loss_kl_class,
                         loss_kl_residual, loss_reconstruction)
from vleed.numgrad import Tensor, softmax
from vleed.synthdata import EmbeddingStore, parse_store, store_bytes

DESK = Path(__file__).resolve().parents[1] / "configs" / "desk.json"
DESK_SEEDS = (0, 1, 2)
DESK_LAMBDAS = (0.0, 1.0, 10.0, 100.0)


# 1

@pytest.mark.criterion(1)
def test_gradient_suite(criterion):
    t0 = time.perf_counter()
    worst = {name: max(gradient_errors(name, instances=20, seed=2024))
             for name in sorted(GRADIENT_CASES)}
    elapsed = time.perf_counter() - t0
    criterion.note(f"max rel err {max(worst.values()):.2e}, {elapsed:.1f}s")
    assert all(v < FD_TOL for v in worst.values()), worst
    assert elapsed < 60


# 2

@pytest.mark.criterion(2)
def test_closed_forms(criterion):
    tol = 1e-9
    e = math.e
    assert abs(loss_kl_residual([[0.0]], [[1.0]]).item()) <= tol
    assert abs(loss_kl_residual([[1.0]], [[1.0]]).item() - 0.5) <= tol
    assert abs(loss_kl_residual([[0.0]], [[e]]).item() - (e * e - 3) / 2) <= tol
    assert abs(loss_kl_class([[2.0]], [[1.0]], [[1.0]], [1]).item() - 0.5) <= tol

    for k in (2, 3, 7):
        uniform = loss_disentangle(np.full((4, k), 1.0 / k)).item()
        assert abs(uniform + math.log(k)) <= tol
        assert abs(loss_disentangle(np.eye(k)).item()) <= tol
        rng = np.random.default_rng(k)
        for _ in range(50):
            v = loss_disentangle(softmax(Tensor(rng.normal(0, 3, (5, k))))).item()
            assert -math.log(k) - tol <= v <= tol

    x = np.array([[0.6, 0.8], [1.0, 0.0]])
    assert abs(loss_reconstruction(x, x).item()) <= tol
    assert abs(loss_reconstruction(x, -x).item() - 2.0) <= tol

    assert abs(gini_fmr([0.2, 0.2, 0.2])) <= tol
    assert abs(gini_fmr([0.0, 0.4, 0.0]) - 1.0) <= tol
    assert abs(gini_fmr([0.1, 0.3]) - 0.5) <= tol
    criterion.note("KL, entropy, reconstruction, Gini")


# 3

@pytest.mark.criterion(3)
def test_verification_oracles(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    for _ in range(100):
        g, i = random_score_set(rng, 10, 500)
        scores = ScoreSet(g, i)
        for target in (1e-3, 1e-2, 1e-1):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                op = tmr_at_fmr(scores, target)
            assert (op.tmr, op.threshold) == brute_tmr_at_fmr(g, i, target)
        res = eer_threshold(scores)
        eer, thr = brute_eer(g, i)
        assert abs(res.eer - eer) <= 1e-12 and abs(res.threshold - thr) <= 1e-12
    elapsed = time.perf_counter() - t0
    criterion.note(f"100 score sets, {elapsed:.1f}s")
    assert elapsed < 120


@pytest.mark.criterion(3)
def test_inlp_planted(criterion):
    for seed in range(5):
        x, lab = planted_coordinate(np.random.default_rng(seed), n=400, d=6, coord=seed % 6)
        op = inlp_fit(x, lab, config=InlpConfig(max_iters=10))
        z = inlp_apply(op, x)
        classes, y = np.unique(lab, return_inverse=True)
        acc = linear_accuracy(z, y, fit_linear_softmax(z, y, len(classes)))
        assert op.iterations_used <= 2
        assert acc <= majority_fraction(lab) + 0.02
    criterion.note("INLP <= 2 iterations on 5 seeds")


@pytest.mark.criterion(3)
def test_ive_planted(criterion):
    hits = 0
    for seed in range(5):
        x, lab = planted_coordinate(np.random.default_rng(seed), n=300, d=8, coord=5)
        ranking = ive_rank(x, lab, IveConfig(forest=ForestConfig(seed=seed)))
        hits += int(ranking.ordering[0] == 5)
    criterion.note(f"IVE planted first in {hits}/5")
    assert hits >= 4


# 4

@pytest.fixture(scope="module")
def desk_sweeps():
    out = []
    for seed in DESK_SEEDS:
        run = load_config(DESK, env={"VLEED_SEED": str(seed)})
        out.append(pipeline.sweep(run, pipeline.synthesize(run), lambdas=DESK_LAMBDAS))
    return out


def _seed_mean(sweeps, pick):
    return float(np.mean([pick(s) for s in sweeps]))


def _member(sweep, lam):
    return next(m["report"] for m in sweep["members"] if m["lambda"] == lam)


def _probe(report, kind):
    return report["leakage"]["probes"][kind]["eval_accuracy"]


@pytest.mark.criterion(4)
def test_desk_utility_preserved(criterion, desk_sweeps):
    base_auc = _seed_mean(desk_sweeps, lambda s: s["baseline"]["verification"]["auc"])
    auc0 = _seed_mean(desk_sweeps, lambda s: _member(s, 0.0)["verification"]["auc"])
    criterion.note(f"a: AUC {auc0:.4f} vs baseline {base_auc:.4f}")
    assert auc0 >= 0.90 * base_auc
    for kind in ("LR", "MLP_S", "MLP_D"):
        base = _seed_mean(desk_sweeps, lambda s: _probe(s["baseline"], kind))
        at0 = _seed_mean(desk_sweeps, lambda s: _probe(_member(s, 0.0), kind))
        assert abs(at0 - base) <= 0.05, (kind, at0, base)


@pytest.mark.criterion(4)
def test_desk_linear_leakage_controllable(criterion, desk_sweeps):
    lr = _seed_mean(desk_sweeps, lambda s: _probe(_member(s, 10.0), "LR"))
    maj = _seed_mean(desk_sweeps,
                     lambda s: _member(s, 10.0)["leakage"]["majority_baseline_eval"])
    criterion.note(f"b: LR@10 {lr:.4f} vs majority {maj:.4f}")
    assert abs(lr - maj) <= 0.05


@pytest.mark.criterion(4)
def test_desk_tradeoff_monotone(criterion, desk_sweeps):
    lr = [_seed_mean(desk_sweeps, lambda s: _probe(_member(s, lam), "LR"))
          for lam in DESK_LAMBDAS]
    auc = [_seed_mean(desk_sweeps, lambda s: _member(s, lam)["verification"]["auc"])
           for lam in DESK_LAMBDAS]
    criterion.note("c: LR " + " ".join(f"{v:.3f}" for v in lr))
    assert all(b <= a + 0.02 for a, b in zip(lr, lr[1:])), lr
    assert all(b <= a + 0.02 for a, b in zip(auc, auc[1:])), auc


@pytest.mark.criterion(4)
def test_desk_nonlinear_gap(criterion, desk_sweeps):
    found = None
    for lam in DESK_LAMBDAS:
        lr = _seed_mean(desk_sweeps, lambda s: _probe(_member(s, lam), "LR"))
        maj = _seed_mean(desk_sweeps,
                         lambda s: _member(s, lam)["leakage"]["majority_baseline_eval"])
        if lr <= maj + 0.05:
            found = (lam, lr)
            break
    assert found is not None, "LR never reaches majority + 0.05"
    lam, lr = found
    deep = _seed_mean(desk_sweeps, lambda s: _probe(_member(s, lam), "MLP_D"))
    criterion.note(f"d: at lambda={lam:g} MLP_D {deep:.4f} vs LR {lr:.4f}")
    assert deep - lr >= 0.05


# 5

@pytest.mark.criterion(5)
def test_moment_matching_single_point(criterion):
    run = load_config(DESK, env={})
    assert run.train.vae_adam.lr <= 5e-3
    run = run.model_copy(update={"eval": run.eval.model_copy(update={"probe_kinds": ("LR",)})})
    result = pipeline.sweep(run, pipeline.synthesize(run), lambdas=[1.0, 1e5],
                            method="pfrnet", include_baseline=False)
    low, high = (_probe(m["report"], "LR") for m in result["members"])
    criterion.note(f"LR {low:.4f} at 1, {high:.4f} at 1e5")
    assert abs(low - high) < 0.05


# 6

SMALL = {
    "seed": 5,
    "synth": {"dim": 16, "num_identities": 40, "samples_per_identity": 5,
              "attribute_strength": 2.0},
    "vleed": {"input_dim": 16, "residual_dim": 8, "class_dim": 4, "residual_hidden": 24,
              "class_hidden": 12, "decoder_hidden": 24, "classifier_hidden": 12},
    "train": {"epochs": 3, "batch_size": 32, "n_clf": 2},
    "eval": {"num_genuine": 80, "num_impostor": 600,
             "probe": {"epochs": 3, "shallow_hidden": 16}},
    "sweep_lambdas": [10, 0, 1],
}


@pytest.mark.criterion(6)
def test_sweep_rerun_byte_identical(criterion, tmp_path):
    cfg = tmp_path / "small.json"
    cfg.write_text(json.dumps(SMALL))
    for name in ("a", "b"):
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
    for fname in ("sweep.json", "sweep.csv", "manifest.json"):
        assert (tmp_path / "a" / fname).read_bytes() == (tmp_path / "b" / fname).read_bytes()
    criterion.note("sweep.json, sweep.csv, manifest.json")


# 7

@pytest.mark.criterion(7)
def test_store_roundtrip_randomized(criterion):
    rng = np.random.default_rng(31)
    counts = [0, 1, 2, 17, 250] + rng.integers(0, 60, 15).tolist()
    for count in counts:
        d, k = int(rng.integers(1, 20)), int(rng.integers(2, 6))
        v = rng.standard_normal((count, d))
        v /= np.maximum(np.linalg.norm(v, axis=1, keepdims=True), 1e-12)
        store = EmbeddingStore(d, k, rng.integers(0, 2**63, count, dtype=np.uint64),
                               rng.integers(0, 2**63, count, dtype=np.uint64),
                               rng.integers(1, k + 1, count), v.astype(np.float32))
        data = store_bytes(store)
        back = parse_store(data)
        assert back.equals(store)
        assert back.vectors.astype(np.float32).tobytes() == \
            store.vectors.astype(np.float32).tobytes()
        assert store_bytes(back) == data
    criterion.note(f"{len(counts)} stores incl. count=0")


@pytest.mark.criterion(7)
def test_checkpoint_roundtrip_randomized(criterion, tmp_path):
    rng = np.random.default_rng(32)
    for i in range(8):
        cfg = VleedConfig(input_dim=int(rng.integers(2, 12)),
                          residual_dim=int(rng.integers(1, 6)),
                          class_dim=int(rng.integers(1, 4)),
                          num_classes=int(rng.integers(2, 5)),
                          residual_hidden=int(rng.integers(1, 9)),
                          class_hidden=int(rng.integers(1, 9)),
                          decoder_hidden=int(rng.integers(1, 9)),
                          classifier_hidden=int(rng.integers(1, 9)),
                          lambda_dis=float(rng.uniform(0, 100)))
        model = VleedModel(cfg, seed=int(rng.integers(0, 2**31)))
        for _, p in model.named_parameters():
            p.data[...] = rng.standard_normal(p.data.shape)
        path = tmp_path / f"m{i}.ckpt"
        model.save(path)
        back = VleedModel.load(path)
        assert back.config == cfg
        for (na, a), (nb, b) in zip(model.named_parameters(), back.named_parameters()):
            assert na == nb and a.data.shape == b.data.shape
            assert a.data.tobytes() == b.data.tobytes()
        back.save(tmp_path / f"r{i}.ckpt")
        assert (tmp_path / f"r{i}.ckpt").read_bytes() == path.read_bytes()
    criterion.note("8 random checkpoints")
