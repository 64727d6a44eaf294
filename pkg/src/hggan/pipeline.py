"""End-to-end wiring: subjects -> hypergraphs -> consensus -> trained generator -> M, Co."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .adversary import (
    DiscriminatorConfig,
    DiscriminatorParams,
    SubjectInputs,
    TrainConfig,
    TrainHistory,
    subject_inputs,
    train,
)
from .construct import DhcConfig, OhghConfig, ConsensusResult, dhc_construct, ohgh_consensus
from .dataio import read_matrix, write_matrix
from .errors import ConfigError, ManifestError
from .hgcore import Hypergraph
from .ihen import Activation, GeneratorConfig, GeneratorParams, generator_forward

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    dhc: DhcConfig = field(default_factory=DhcConfig)
    ohgh: OhghConfig = field(default_factory=OhghConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        kinds = {f.name: f.default_factory for f in fields(cls)}
        unknown = set(data) - set(kinds)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        parts = {}
        for name, factory in kinds.items():
            section = dict(data.get(name, {}))
            allowed = {f.name for f in fields(factory())}
            bad = set(section) - allowed
            if bad:
                raise ConfigError(f"unknown keys in section {name!r}: {sorted(bad)}")
            if name == "discriminator" and "hidden" in section:
                section["hidden"] = tuple(section["hidden"])
            try:
                parts[name] = factory(**{**asdict(factory()), **section})
            except TypeError as exc:
                raise ConfigError(f"section {name!r}: {exc}") from None
        return cls(**parts)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    def with_seed(self, seed: int) -> "PipelineConfig":
        return PipelineConfig(
            self.dhc,
            replace(self.ohgh, seed=seed),
            replace(self.generator, seed=seed),
            replace(self.discriminator, seed=seed),
            replace(self.train, seed=seed),
        )

    def to_dict(self) -> dict:
        return {f.name: asdict(getattr(self, f.name)) for f in fields(self)}


@dataclass
class FitResult:
    cohort: list[Hypergraph]
    consensus: ConsensusResult
    subjects: list[SubjectInputs]
    generator: GeneratorParams
    discriminator: DiscriminatorParams
    history: TrainHistory


def build_hypergraphs(records, cfg: DhcConfig) -> list[Hypergraph]:
    return [dhc_construct(r.bold, cfg) for r in records]


def fit(records, cfg: PipelineConfig = PipelineConfig()) -> FitResult:
    records = list(records)
    cohort = build_hypergraphs(records, cfg.dhc)
    consensus = ohgh_consensus(cohort, cfg.ohgh)
    log.info("consensus objective %.4f after %d sweeps", consensus.score, consensus.iterations)
    subjects = subject_inputs(records, consensus.hypergraph, cohort, cfg.generator.zscore_bold)
    gp, dp, history = train(subjects, cfg.generator, cfg.discriminator, cfg.train)
    return FitResult(cohort, consensus, subjects, gp, dp, history)


def generate(gp: GeneratorParams, subjects) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Fused connectivity M and node correlation Co per subject."""
    ms, cos = [], []
    for s in subjects:
        cache = generator_forward(gp, s.a, s.f0)
        ms.append(cache.m)
        cos.append(cache.co)
    return ms, cos


# -- checkpoints ------------------------------------------------------------

def save_checkpoint(directory, gp: GeneratorParams, dp: DiscriminatorParams | None = None, extra: dict | None = None) -> Path:
    """One binary matrix file per tensor plus ``index.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors = {}
    for name, t in zip(gp.tensor_names(), gp.tensors()):
        write_matrix(directory / f"{name}.bin", t)
        tensors[name] = {"file": f"{name}.bin", "shape": list(t.shape)}
    d_tensors = {}
    if dp is not None:
        for name, t in zip(dp.tensor_names(), dp.tensors()):
            write_matrix(directory / f"{name}.bin", t)
            d_tensors[name] = {"file": f"{name}.bin", "shape": list(t.shape)}
    index = {
        "generator": {
            "layers": gp.depth,
            "lambda": gp.lam,
            "activation": gp.activation.name,
            "slope": gp.activation.slope,
            "tensors": tensors,
        },
        "discriminator": {"tensors": d_tensors} if dp is not None else None,
        **(extra or {}),
    }
    path = directory / "index.json"
    path.write_text(json.dumps(index, indent=2))
    return path


def load_checkpoint(path) -> tuple[GeneratorParams, DiscriminatorParams | None, dict]:
    path = Path(path)
    if path.is_dir():
        path = path / "index.json"
    if not path.exists():
        raise ManifestError(f"checkpoint index not found: {path}")
    index = json.loads(path.read_text())
    base = path.parent
    g = index["generator"]

    def load(entry):
        t = read_matrix(base / entry["file"])
        return t.reshape(entry["shape"])

    layers = [(load(g["tensors"][f"W_V{l}"]), load(g["tensors"][f"W_E{l}"])) for l in range(g["layers"])]
    gp = GeneratorParams(layers, float(g["lambda"]), Activation(g["activation"], float(g["slope"])))
    dp = None
    if index.get("discriminator"):
        t = index["discriminator"]["tensors"]
        count = len(t) // 2
        dp = DiscriminatorParams([load(t[f"D_W{l}"]) for l in range(count)], [load(t[f"D_b{l}"]) for l in range(count)])
    return gp, dp, index
