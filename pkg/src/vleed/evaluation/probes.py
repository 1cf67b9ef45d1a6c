"""Attribute-leakage probes trained on released representations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..errors import ConfigError, ContractError
from ..model import cross_entropy
from ..numgrad import Adam, Mlp, MlpSpec, Tensor, backward, spawn_rngs

PROBE_KINDS = ("LR", "MLP_S", "MLP_D")


class ProbeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    epochs: int = Field(30, ge=1)
    batch_size: int = Field(256, ge=1)
    lr: float = Field(1e-3, gt=0)
    seed: int = 0
    shallow_hidden: int = Field(512, ge=1)
    leaky_slope: float = 0.01


def probe_spec(kind: str, dim: int, num_classes: int, config: ProbeConfig) -> MlpSpec:
    """LR: one linear layer. MLP_S: linear, LeakyReLU, linear head.
    MLP_D: four 512-unit LeakyReLU layers with dropout 0.2, then a head."""
    if kind == "LR":
        return MlpSpec((dim, num_classes))
    if kind == "MLP_S":
        return MlpSpec((dim, config.shallow_hidden, num_classes), "leaky_relu",
                       slope=config.leaky_slope)
    if kind == "MLP_D":
        return MlpSpec((dim, 512, 512, 512, 512, num_classes), "leaky_relu",
                       slope=config.leaky_slope, dropout_rate=0.2)
    raise ConfigError(f"unknown probe kind {kind!r}; expected one of {PROBE_KINDS}")


@dataclass
class Probe:
    kind: str
    net: Mlp
    num_classes: int

    def logits(self, z) -> np.ndarray:
        return self.net(Tensor(np.atleast_2d(z))).data

    def predict(self, z) -> np.ndarray:
        """1-based labels; ties go to the lowest class index."""
        return self.logits(z).argmax(axis=1) + 1


def train_probe(kind: str, z, labels, config: ProbeConfig | None = None,
                num_classes: int | None = None) -> Probe:
    cfg = config or ProbeConfig()
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    if len(z) != len(labels):
        raise ContractError(f"{len(z)} rows but {len(labels)} labels")
    if len(np.unique(labels)) < 2:
        raise ConfigError("a probe needs at least two classes")
    k = num_classes or int(labels.max())
    init_rng, shuffle_rng, dropout_rng = spawn_rngs(cfg.seed, 3)
    net = Mlp(probe_spec(kind, z.shape[1], k, cfg), init_rng, name=f"probe_{kind}")
    params = net.parameters()
    opt = Adam(params, lr=cfg.lr)
    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(len(z))
        for start in range(0, len(z), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss = cross_entropy(net(Tensor(z[idx]), train=True, rng=dropout_rng), labels[idx])
            opt.step(backward(loss, params))
    return Probe(kind, net, k)


def probe_accuracy(probe: Probe, z, labels) -> float:
    labels = np.asarray(labels, dtype=np.int64)
    if len(np.atleast_2d(z)) != len(labels):
        raise ContractError("rows and labels differ in length")
    return float(np.mean(probe.predict(z) == labels))


def majority_baseline(labels) -> float:
    """Accuracy of always predicting the most frequent label."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ContractError("majority_baseline needs at least one label")
    _, counts = np.unique(labels, return_counts=True)
    return float(counts.max() / labels.size)
