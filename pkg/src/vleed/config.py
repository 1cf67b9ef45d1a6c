"""One JSON document configures a whole run.

Every section has defaults, so ``{}`` is a valid (512-d, full-size) run.
Unknown keys are rejected at every level. The top-level ``seed`` is the
single source of randomness: it replaces the ``seed`` fields of the nested
sections (``VLEED_SEED`` in the environment replaces it in turn).

Derived seeds: synth/split use ``seed``, pair sampling ``seed + 1``,
training ``seed + 2``, probes and IVE forests ``seed + 3``.
"""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .baselines import InlpConfig, IveConfig
from .errors import ConfigError
from .evaluation import EvalConfig
from .model import VleedConfig
from .synthdata import SynthConfig
from .training import TrainConfig

DEFAULT_LAMBDAS = (0.0, 0.1, 1.0, 10.0, 100.0, 1000.0)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: int = 0
    synth: SynthConfig = SynthConfig()
    vleed: VleedConfig = VleedConfig()
    train: TrainConfig = TrainConfig()
    inlp: InlpConfig = InlpConfig()
    ive: IveConfig = IveConfig()
    eval: EvalConfig = EvalConfig()
    sweep_lambdas: tuple[float, ...] = Field(DEFAULT_LAMBDAS, min_length=1)

    @model_validator(mode="after")
    def _consistent(self):
        if self.vleed.input_dim != self.synth.dim:
            raise ValueError(f"vleed.input_dim ({self.vleed.input_dim}) must equal "
                             f"synth.dim ({self.synth.dim})")
        if self.vleed.num_classes != self.synth.num_classes:
            raise ValueError("vleed.num_classes must equal synth.num_classes")
        if min(self.sweep_lambdas) < 0:
            raise ValueError("sweep lambdas must be non-negative")
        return self

    def resolved(self) -> "RunConfig":
        """Copy with every nested seed derived from the top-level one."""
        s = self.seed
        ive = self.ive.model_copy(update={"forest": self.ive.forest.model_copy(
            update={"seed": s + 3})})
        probe = self.eval.probe.model_copy(update={"seed": s + 3})
        return self.model_copy(update={
            "synth": self.synth.model_copy(update={"seed": s}),
            "train": self.train.model_copy(update={"seed": s + 2}),
            "ive": ive,
            "eval": self.eval.model_copy(update={"probe": probe}),
        })

    def with_lambda(self, lam: float) -> "RunConfig":
        return self.model_copy(update={"vleed": self.vleed.model_copy(
            update={"lambda_dis": float(lam)})})

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def parse_config(text: str, env: dict | None = None) -> RunConfig:
    env = os.environ if env is None else env
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: "
                          f"{exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if env.get("VLEED_SEED"):
        try:
            raw["seed"] = int(env["VLEED_SEED"])
        except ValueError as exc:
            raise ConfigError(f"VLEED_SEED is not an integer: {env['VLEED_SEED']!r}") from exc
    try:
        return RunConfig(**raw).resolved()
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, env: dict | None = None) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), env)
