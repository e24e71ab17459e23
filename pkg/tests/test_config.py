import numpy as np
import pytest
import yaml

from fsat.attack import Domain
from fsat.config import DEFAULTS, PURPOSES, derive_seed, load_config, parse_config
from fsat.errors import ConfigError


def test_defaults_parse():
    cfg = parse_config({})
    assert cfg.seed == 0 and cfg.manifest is None and cfg.augment is None
    assert cfg.train.attack is None  # gamma = 0 means no training attack
    assert cfg.synth.n_real + cfg.synth.n_fake == 2500
    a = cfg.eval.attacks[0].config
    assert (a.domain, a.epsilon, a.iterations) == (Domain.FREQ_MAGNITUDE, 0.01, 5)


def test_derived_seeds_are_distinct_and_stable():
    seeds = [derive_seed(3, p) for p in PURPOSES]
    assert len(set(seeds)) == len(seeds)
    assert seeds == [derive_seed(3, p) for p in PURPOSES]
    assert derive_seed(4, "data") != derive_seed(3, "data")
    with pytest.raises(ConfigError):
        derive_seed(0, "nope")


def test_unknown_and_malformed_keys():
    with pytest.raises(ConfigError, match="train.lrate"):
        parse_config({"train": {"lrate": 1.0}})
    with pytest.raises(ConfigError):
        parse_config({"train": 5})
    with pytest.raises(ConfigError):
        parse_config({"train": {"epochs": "many"}})
    with pytest.raises(ConfigError):
        parse_config({"seed": -1})
    with pytest.raises(ConfigError):
        parse_config({"eval": {"attacks": [{"domain": "phase"}]}})
    with pytest.raises(ConfigError):
        parse_config({"eval": {"corruptions": [{"kind": "gain"}]}})
    with pytest.raises(ConfigError):
        parse_config([1, 2])


def test_gamma_enables_training_attack():
    cfg = parse_config({"train": {"gamma": 0.1}, "attack": {"iterations": 3}})
    assert cfg.train.attack.iterations == 3
    assert cfg.train.attack.seed == derive_seed(0, "attack")


def test_standard_grid_and_sources():
    cfg = parse_config({"eval": {"standard_grid": True, "grid_sources": ["A", "B"]}})
    assert len(cfg.eval.attacks) == 5 * 2 * 3


def test_paths_resolve_against_config_file(tmp_path):
    (tmp_path / "sub").mkdir()
    path = tmp_path / "sub" / "run.yaml"
    path.write_text(yaml.safe_dump({"data": {"manifest": "data/m.tsv"},
                                    "train": {"init_checkpoint": "/abs/base.ckpt"},
                                    "eval": {"surrogates": {"B": "b.ckpt"}}}))
    cfg = load_config(path, seed=9)
    assert cfg.manifest == tmp_path / "sub" / "data" / "m.tsv"
    assert str(cfg.init_checkpoint) == "/abs/base.ckpt"
    assert cfg.eval.surrogates["B"] == tmp_path / "sub" / "b.ckpt"
    assert cfg.seed == 9


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.yaml")
    (tmp_path / "bad.yaml").write_text("train: [unclosed")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.yaml")


def test_dump_round_trips(tmp_path):
    cfg = parse_config({"augment": {"enabled": True}, "seed": 2})
    cfg.dump(tmp_path / "echo.yaml")
    doc = yaml.safe_load((tmp_path / "echo.yaml").read_text())
    assert doc["derived_seeds"]["augment"] == cfg.augment.seed
    assert len(doc["augment"]["ops"]) == 14
    doc.pop("derived_seeds")
    again = parse_config(doc)
    assert again.to_dict() == cfg.to_dict()


def test_defaults_not_mutated():
    before = repr(DEFAULTS)
    parse_config({"train": {"epochs": 2}, "data": {"n_real": 4}})
    assert repr(DEFAULTS) == before
    assert np.isclose(parse_config({}).train.lr, 1e-3)
