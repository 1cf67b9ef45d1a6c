"""Alternating classifier / VAE minibatch training.

Per minibatch: encode both latents and sample them once; take ``n_clf``
Adam steps on the auxiliary classifier using the sampled ``z_r`` with the
encoder detached; then, with the classifier frozen, take one Adam step on
the weighted VAE objective, whose disentanglement term is the negative
prediction entropy of that classifier on the same ``z_r``.

``method="pfrnet"`` swaps the entropy term for the batch moment-matching
loss and skips the classifier entirely.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .baselines.moments import moment_loss, moments_available
from .errors import ConfigError, ContractError, NumericError, TrainingAborted
from .model import (LossBreakdown, VleedConfig, VleedModel, cross_entropy, ingest,
                    loss_disentangle, loss_kl_class, loss_kl_residual,
                    loss_reconstruction, weighted_total)
from .numgrad import Adam, Tensor, backward, reparameterize, softmax, spawn_rngs

log = logging.getLogger(__name__)

METHODS = ("vleed", "pfrnet")
MOMENT_LR_CAP = 5e-3


class AdamConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    lr: float = Field(1e-4, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    epsilon: float = Field(1e-8, gt=0)


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    epochs: int = Field(10, ge=1)
    batch_size: int = Field(256, ge=1)
    n_clf: int = Field(1, ge=1)
    warmup_epochs: int = Field(0, ge=0)
    classifier_adam: AdamConfig = AdamConfig()
    vae_adam: AdamConfig = AdamConfig()
    moment_order: int = Field(4, ge=1)
    seed: int = 0
    shuffle: bool = True


@dataclass
class EpochRecord:
    epoch: int
    lambda_dis: float
    losses: LossBreakdown
    classifier_accuracy: float | None
    classifier_steps: int
    vae_steps: int
    skipped_batches: int
    seconds: float = field(default=0.0, compare=False)

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("seconds")
        return d


@dataclass
class TrainTrace:
    method: str
    epochs: list = field(default_factory=list)

    def to_dict(self, timing: bool = True) -> dict:
        return {"method": self.method, "epochs": [e.to_dict(timing) for e in self.epochs]}

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), sort_keys=True, indent=2) + "\n"


def effective_lambda(epoch_index: int, warmup_epochs: int, lambda_dis: float) -> float:
    """Disentanglement weight after linear warm-up over ``warmup_epochs``."""
    if epoch_index < 0 or warmup_epochs < 0 or lambda_dis < 0:
        raise ContractError("epoch_index, warmup_epochs and lambda_dis must be non-negative")
    if warmup_epochs == 0:
        return float(lambda_dis)
    return min(1.0, (epoch_index + 1) / warmup_epochs) * float(lambda_dis)


def minibatches(n: int, batch_size: int, shuffle: bool = True,
                rng: np.random.Generator | None = None) -> list[np.ndarray]:
    if batch_size < 1:
        raise ContractError("batch_size must be >= 1")
    order = rng.permutation(n) if shuffle else np.arange(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def _check_dataset(x: np.ndarray, labels: np.ndarray, config: VleedConfig) -> None:
    if len(x) == 0:
        raise ConfigError("training set is empty")
    if len(x) != len(labels):
        raise ContractError(f"{len(x)} embeddings but {len(labels)} labels")
    if labels.min() < 1 or labels.max() > config.num_classes:
        raise ConfigError(f"labels must lie in 1..{config.num_classes}")
    if len(np.unique(labels)) < 2:
        raise ConfigError("training needs at least two distinct attribute labels")


def train_vleed(x, labels, vleed_config: VleedConfig, train_config: TrainConfig,
                method: str = "vleed", model: VleedModel | None = None):
    """Train a model; returns ``(model, trace)``."""
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
    x = ingest(x).data
    labels = np.asarray(labels, dtype=np.int64)
    _check_dataset(x, labels, vleed_config)

    tc = train_config
    shuffle_rng, noise_rng, dropout_rng = spawn_rngs(tc.seed, 3)
    if model is None:
        model = VleedModel(vleed_config, seed=tc.seed)
    vae_params = model.vae_parameters()
    clf_params = model.classifier_parameters()
    vae_lr = tc.vae_adam.lr
    if method == "pfrnet" and vae_lr > MOMENT_LR_CAP:
        log.info("capping VAE lr at %g for moment matching", MOMENT_LR_CAP)
        vae_lr = MOMENT_LR_CAP
    vae_opt = Adam(vae_params, vae_lr, tc.vae_adam.beta1, tc.vae_adam.beta2,
                   tc.vae_adam.epsilon)
    clf_opt = Adam(clf_params, tc.classifier_adam.lr, tc.classifier_adam.beta1,
                   tc.classifier_adam.beta2, tc.classifier_adam.epsilon)

    trace = TrainTrace(method=method)
    for epoch in range(tc.epochs):
        started = time.perf_counter()
        lam = effective_lambda(epoch, tc.warmup_epochs, vleed_config.lambda_dis)
        sums = np.zeros(5)
        correct = clf_steps = vae_steps = skipped = 0
        for b, idx in enumerate(minibatches(len(x), tc.batch_size, tc.shuffle, shuffle_rng)):
            try:
                step = _train_batch(model, x[idx], labels[idx], vleed_config, tc, method, lam,
                                    vae_opt, clf_opt, noise_rng, dropout_rng)
            except TrainingAborted:
                raise
            except NumericError as exc:
                raise TrainingAborted(f"numeric failure at epoch {epoch}, batch {b}: {exc}",
                                      epoch, b) from exc
            if step is None:
                raise TrainingAborted(f"non-finite loss at epoch {epoch}, batch {b}", epoch, b)
            batch_losses, batch_correct, skip = step
            sums += len(idx) * batch_losses
            correct += batch_correct
            clf_steps += tc.n_clf if method == "vleed" else 0
            vae_steps += 1
            skipped += skip

        means = sums / len(x)
        losses = LossBreakdown(*map(float, means),
                               total=float(weighted_total(vleed_config, *means[:4], lambda_dis=lam)))
        trace.epochs.append(EpochRecord(
            epoch=epoch, lambda_dis=lam, losses=losses,
            classifier_accuracy=correct / len(x) if method == "vleed" else None,
            classifier_steps=clf_steps, vae_steps=vae_steps, skipped_batches=skipped,
            seconds=time.perf_counter() - started))
        log.debug("epoch %d: %s", epoch, losses)
    return model, trace


def _train_batch(model, xb, lb, config, tc, method, lam, vae_opt, clf_opt, noise_rng,
                 dropout_rng):
    """One minibatch of the alternating scheme.

    Returns ``(losses, correct, skipped)`` or None when a loss went non-finite.
    """
    xb = Tensor(xb)
    mu_r, sigma_r = model.encode_residual(xb)
    mu_c, sigma_c = model.encode_class(xb)
    z_r = reparameterize(mu_r, sigma_r, noise_rng)
    z_c = reparameterize(mu_c, sigma_c, noise_rng)

    l_clf, correct, skipped = 0.0, 0, 0
    clf_params = model.classifier_parameters()
    if method == "vleed":
        z_frozen = z_r.detach()
        for i in range(tc.n_clf):
            loss = cross_entropy(model.classify(z_frozen, train=True, rng=dropout_rng), lb)
            if not np.isfinite(loss.data):
                return None
            if i == 0:
                l_clf = float(loss.data)
            clf_opt.step(backward(loss, clf_params))
        probs = softmax(model.classify(z_r))
        correct = int((probs.data.argmax(axis=1) == lb - 1).sum())
        l_dis = loss_disentangle(probs)
    elif moments_available(lb, config.num_classes):
        l_dis = moment_loss(z_r, lb, tc.moment_order, config.num_classes)
    else:
        log.warning("a class has < 2 samples in this batch, moment term skipped")
        skipped = 1
        l_dis = Tensor(0.0)

    l_rec = loss_reconstruction(xb, model.decode(z_r, z_c))
    l_kl_r = loss_kl_residual(mu_r, sigma_r)
    l_kl_c = loss_kl_class(mu_c, sigma_c, model.class_prior_means, lb)
    total = weighted_total(config, l_rec, l_kl_r, l_kl_c, l_dis, lam)
    if not np.isfinite(total.data):
        return None
    vae_opt.step(backward(total, model.vae_parameters()))
    losses = np.array([float(l_rec.data), float(l_kl_r.data), float(l_kl_c.data),
                       float(l_dis.data), l_clf])
    return losses, correct, skipped
