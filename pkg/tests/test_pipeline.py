import json

import numpy as np
import pytest

from hggan.dataio import SynthConfig, synth_cohort
from hggan.errors import ConfigError, ManifestError
from hggan.pipeline import PipelineConfig, fit, generate, load_checkpoint, save_checkpoint


def test_config_round_trip(tmp_path):
    cfg = PipelineConfig().with_seed(7)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert PipelineConfig.load(path) == cfg
    assert cfg.train.seed == cfg.ohgh.seed == cfg.generator.seed == 7


def test_config_partial_and_errors(tmp_path):
    cfg = PipelineConfig.from_dict({"train": {"epochs": 3}, "discriminator": {"hidden": [8, 8]}})
    assert cfg.train.epochs == 3 and cfg.discriminator.hidden == (8, 8)
    assert cfg.generator == PipelineConfig().generator
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"nope": {}})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"train": {"epochs": -1}})
    with pytest.raises(ConfigError):
        PipelineConfig.load(tmp_path / "missing.json")


def test_fit_generate_checkpoint(tmp_path):
    recs = synth_cohort(SynthConfig(n=6, d=30, subjects_per_group=3, block_count=2))
    cfg = PipelineConfig.from_dict({"train": {"epochs": 2, "walks_per_start": 8}})
    result = fit(recs, cfg)
    assert len(result.history) == 2
    ms, cos = generate(result.generator, result.subjects)
    assert len(ms) == 6 and ms[0].shape == (6, 6) and cos[0].shape == (6,)
    for a in (s.a for s in result.subjects):
        assert a.shape == (6, 12)

    save_checkpoint(tmp_path, result.generator, result.discriminator, {"note": "x"})
    gp, dp, index = load_checkpoint(tmp_path / "index.json")
    assert index["note"] == "x"
    for a, b in zip(gp.tensors() + dp.tensors(), result.generator.tensors() + result.discriminator.tensors()):
        np.testing.assert_array_equal(a, b)
    ms2, _ = generate(gp, result.subjects)
    np.testing.assert_array_equal(ms2[0], ms[0])

    with pytest.raises(ManifestError):
        load_checkpoint(tmp_path / "elsewhere")
