"""Split-latent VAE with an entropy-based disentanglement term.

An embedding ``x`` is encoded into a residual latent ``z_r`` (released) and
a small class latent ``z_c`` (absorbs the sensitive attribute). ``z_r`` is
pulled toward N(0, I); ``z_c`` toward N(mu_prior[c], I) with one learnable
mean per class. The decoder reconstructs ``x`` from ``[z_r; z_c]`` and its
output is l2-normalised. An auxiliary classifier on ``z_r`` supplies the
conditional-entropy estimate whose negation is the disentanglement loss.

All losses are batch means; labels are 1-based throughout.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import container
from .errors import ContractError, FormatError, NumericError
from .numgrad import (Mlp, MlpSpec, Parameter, Tensor, as_tensor, clip, concat, exp,
                      l2_normalize, log, log_softmax, make_rng, reparameterize,
                      softmax, xlogx)

UNIT_TOL = 1e-6


class VleedConfig(BaseModel):
    """Architecture and loss weights. Defaults follow the 512-d setting."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    input_dim: int = Field(512, ge=1)
    residual_dim: int = Field(480, ge=1)
    class_dim: int = Field(32, ge=1)
    num_classes: int = Field(2, ge=2)
    lambda_rec: float = Field(1.0, ge=0)
    beta_r: float = Field(0.1, ge=0)
    beta_c: float = Field(1.0, ge=0)
    lambda_dis: float = Field(1.0, ge=0)
    residual_hidden: int = Field(512, ge=1)
    class_hidden: int = Field(256, ge=1)
    decoder_hidden: int = Field(512, ge=1)
    classifier_hidden: int = Field(256, ge=1)
    classifier_dropout: float = Field(0.2, ge=0, lt=1)
    prelu_init: float = 0.25
    leaky_slope: float = 0.01
    logvar_clamp: tuple[float, float] = (-10.0, 10.0)
    prior_scale: float = 1.0

    @model_validator(mode="after")
    def _check_clamp(self):
        lo, hi = self.logvar_clamp
        if not lo < hi:
            raise ValueError(f"logvar_clamp must be increasing, got {self.logvar_clamp}")
        return self

    def trunk_spec(self, hidden: int) -> MlpSpec:
        # three hidden layers; the mu / logvar heads are the fourth weight layer
        return MlpSpec((self.input_dim, hidden, hidden, hidden), "prelu",
                       slope=self.prelu_init, activate_output=True)

    def decoder_spec(self) -> MlpSpec:
        h = self.decoder_hidden
        return MlpSpec((self.residual_dim + self.class_dim, h, h, h, self.input_dim),
                       "prelu", slope=self.prelu_init)

    def classifier_spec(self) -> MlpSpec:
        h = self.classifier_hidden
        return MlpSpec((self.residual_dim, h, h, h, self.num_classes), "leaky_relu",
                       slope=self.leaky_slope, dropout_rate=self.classifier_dropout)


@dataclass(frozen=True)
class LossBreakdown:
    l_rec: float
    l_kl_r: float
    l_kl_c: float
    l_dis: float
    l_clf: float
    total: float

    def to_dict(self) -> dict:
        return asdict(self)


class _GaussianEncoder:
    def __init__(self, trunk_spec: MlpSpec, hidden: int, latent: int,
                 rng: np.random.Generator, name: str):
        self.trunk = Mlp(trunk_spec, rng, f"{name}.trunk")
        self.mu_head = Mlp(MlpSpec((hidden, latent)), rng, f"{name}.mu")
        self.logvar_head = Mlp(MlpSpec((hidden, latent)), rng, f"{name}.logvar")

    def named_parameters(self):
        return (self.trunk.named_parameters() + self.mu_head.named_parameters()
                + self.logvar_head.named_parameters())

    def __call__(self, x: Tensor, clamp: tuple[float, float]) -> tuple[Tensor, Tensor]:
        h = self.trunk(x)
        mu = self.mu_head(h)
        sigma = exp(0.5 * clip(self.logvar_head(h), *clamp))
        return mu, sigma


def ingest(x) -> Tensor:
    """Validate a batch of embeddings and l2-normalise rows that drifted."""
    arr = np.atleast_2d(np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64))
    if not np.all(np.isfinite(arr)):
        raise ContractError("input embeddings contain non-finite values")
    norms = np.linalg.norm(arr, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise ContractError("input embedding with zero norm")
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        arr = arr / norms
    return Tensor(arr)


class VleedModel:
    """Encoders, decoder, class-prior means and auxiliary classifier."""

    def __init__(self, config: VleedConfig, seed: int = 0):
        self.config = config
        rng = make_rng(seed)
        c = config
        self.residual_encoder = _GaussianEncoder(c.trunk_spec(c.residual_hidden),
                                                 c.residual_hidden, c.residual_dim, rng,
                                                 "residual_encoder")
        self.class_encoder = _GaussianEncoder(c.trunk_spec(c.class_hidden), c.class_hidden,
                                              c.class_dim, rng, "class_encoder")
        self.decoder = Mlp(c.decoder_spec(), rng, "decoder")
        self.classifier = Mlp(c.classifier_spec(), rng, "classifier")
        self.class_prior_means = Parameter(
            c.prior_scale * rng.standard_normal((c.num_classes, c.class_dim)),
            name="class_prior_means")

    def vae_named_parameters(self) -> list[tuple[str, Parameter]]:
        return (self.residual_encoder.named_parameters()
                + self.class_encoder.named_parameters()
                + self.decoder.named_parameters()
                + [("class_prior_means", self.class_prior_means)])

    def vae_parameters(self) -> list[Parameter]:
        return [p for _, p in self.vae_named_parameters()]

    def classifier_parameters(self) -> list[Parameter]:
        return self.classifier.parameters()

    def named_parameters(self) -> list[tuple[str, Parameter]]:
        return self.vae_named_parameters() + self.classifier.named_parameters()

    def encode_residual(self, x) -> tuple[Tensor, Tensor]:
        return self._encode(self.residual_encoder, x)

    def encode_class(self, x) -> tuple[Tensor, Tensor]:
        return self._encode(self.class_encoder, x)

    def _encode(self, encoder, x):
        x = ingest(x)
        if x.shape[1] != self.config.input_dim:
            raise ContractError(f"expected {self.config.input_dim}-d input, got {x.shape[1]}")
        mu, sigma = encoder(x, self.config.logvar_clamp)
        if not (np.all(np.isfinite(mu.data)) and np.all(np.isfinite(sigma.data))):
            raise NumericError("encoder produced non-finite output")
        return mu, sigma

    def decode(self, z_r, z_c) -> Tensor:
        z_r, z_c = as_tensor(z_r), as_tensor(z_c)
        if z_r.shape[-1] != self.config.residual_dim or z_c.shape[-1] != self.config.class_dim:
            raise ContractError(f"latent dims {z_r.shape[-1]}, {z_c.shape[-1]} do not match "
                                f"({self.config.residual_dim}, {self.config.class_dim})")
        return l2_normalize(self.decoder(concat([z_r, z_c], axis=-1)))

    def classify(self, z_r, train: bool = False, rng=None) -> Tensor:
        """Logits of the auxiliary classifier."""
        return self.classifier(z_r, train=train, rng=rng)

    def save(self, path) -> None:
        meta = {"config": self.config.model_dump(mode="json"), "kind": "vleed"}
        tensors = [(name, p.data) for name, p in self.named_parameters()]
        container.save(path, container.MODEL_MAGIC, meta, tensors)

    @classmethod
    def load(cls, path) -> "VleedModel":
        meta, tensors = container.load(path, container.MODEL_MAGIC)
        model = cls(VleedConfig(**meta["config"]))
        params = dict(model.named_parameters())
        if set(params) != set(tensors):
            missing = sorted(set(params) ^ set(tensors))
            raise FormatError(f"checkpoint parameters do not match the config: {missing[:5]}")
        for name, p in params.items():
            if tensors[name].shape != p.data.shape:
                raise FormatError(f"{name}: stored shape {tensors[name].shape} "
                                  f"!= expected {p.data.shape}")
            p.assign(tensors[name])
        return model


# loss terms

def _rows(t) -> Tensor:
    t = as_tensor(t)
    return t.reshape(1, -1) if t.ndim == 1 else t


def _labels(labels, num_classes: int) -> np.ndarray:
    lab = np.atleast_1d(np.asarray(labels))
    if lab.size and (lab.min() < 1 or lab.max() > num_classes):
        raise ContractError(f"labels must lie in 1..{num_classes}")
    return lab.astype(np.int64) - 1


def loss_reconstruction(x, xhat) -> Tensor:
    """Mean cosine distance ``1 - cos(x, xhat)`` for unit-norm rows; in [0, 2]."""
    x, xhat = _rows(x), _rows(xhat)
    for name, t in (("x", x), ("xhat", xhat)):
        if np.any(np.abs(np.linalg.norm(t.data, axis=1) - 1.0) > UNIT_TOL):
            raise ContractError(f"{name} rows must be unit norm")
    return (1.0 - (x * xhat).sum(axis=1)).mean()


def _kl_terms(diff: Tensor, sigma: Tensor) -> Tensor:
    if not np.all(sigma.data > 0):
        raise ContractError("sigma must be strictly positive")
    return (0.5 * (diff * diff + sigma * sigma - 2.0 * log(sigma) - 1.0).sum(axis=1)).mean()


def loss_kl_residual(mu, sigma) -> Tensor:
    """KL(N(mu, sigma^2) || N(0, I)), summed over dims, averaged over the batch."""
    return _kl_terms(_rows(mu), _rows(sigma))


def loss_kl_class(mu, sigma, prior_means, labels) -> Tensor:
    """KL to N(prior_means[c], I) where ``c`` is each sample's 1-based label."""
    prior_means = as_tensor(prior_means)
    if prior_means.ndim == 1:
        prior_means = prior_means.reshape(1, -1)
    idx = _labels(labels, prior_means.shape[0])
    return _kl_terms(_rows(mu) - prior_means[idx], _rows(sigma))


def loss_classifier(probs, labels) -> Tensor:
    """Mean ``-log p[c]``."""
    probs = _rows(probs)
    idx = _labels(labels, probs.shape[1])
    picked = probs[np.arange(len(idx)), idx]
    return -log(picked).mean()


def cross_entropy(logits, labels) -> Tensor:
    """Same quantity as :func:`loss_classifier`, computed stably from logits."""
    logits = _rows(logits)
    idx = _labels(labels, logits.shape[1])
    return -log_softmax(logits)[np.arange(len(idx)), idx].mean()


def loss_disentangle(probs) -> Tensor:
    """Batch-mean negative entropy ``sum_k p_k log p_k``; in [-log K, 0]."""
    return xlogx(_rows(probs)).sum(axis=1).mean()


def weighted_total(config: VleedConfig, l_rec, l_kl_r, l_kl_c, l_dis, lambda_dis=None):
    """The VAE objective. Works on floats and on Tensors alike."""
    lam = config.lambda_dis if lambda_dis is None else lambda_dis
    weights = (config.lambda_rec, config.beta_r, config.beta_c, lam)
    if min(weights) < 0:
        raise ContractError(f"loss weights must be non-negative, got {weights}")
    return (config.lambda_rec * l_rec
            + (config.beta_r / config.residual_dim) * l_kl_r
            + (config.beta_c / config.class_dim) * l_kl_c
            + lam * l_dis)


def combined_loss(config: VleedConfig, l_rec, l_kl_r, l_kl_c, l_dis, l_clf=0.0,
                  lambda_dis=None) -> LossBreakdown:
    """Breakdown with the weighted total; ``l_clf`` is reported but not summed."""
    vals = [float(v.data) if isinstance(v, Tensor) else float(v)
            for v in (l_rec, l_kl_r, l_kl_c, l_dis, l_clf)]
    total = weighted_total(config, *vals[:4], lambda_dis=lambda_dis)
    return LossBreakdown(*vals, total=float(total))


def infer_release(model: VleedModel, x) -> np.ndarray:
    """Deterministic released representation: l2-normalised residual mean."""
    mu, _ = model.encode_residual(x)
    norms = np.linalg.norm(mu.data, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise NumericError("residual mean has (near) zero norm; cannot normalise")
    return mu.data / norms


def label_entropy(labels) -> float:
    _, counts = np.unique(np.asarray(labels), return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def mutual_info_from(labels, probs) -> float:
    """``H(C) - mean prediction entropy``, clipped below at 0."""
    cond = -float(loss_disentangle(probs).data)
    return max(0.0, label_entropy(labels) - cond)


def mutual_info_estimate(model: VleedModel, x, labels, rng=None) -> float:
    """MI diagnostic using the auxiliary classifier on sampled residual latents.

    Without an ``rng`` the posterior mean is used instead of a sample.
    """
    mu, sigma = model.encode_residual(x)
    z = reparameterize(mu, sigma, rng) if rng is not None else mu
    probs = softmax(model.classify(z))
    return mutual_info_from(labels, probs)
