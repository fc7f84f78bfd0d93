from __future__ import annotations

import json

import pytest

from planforge.config import (
    EngineConfig,
    config_from_json,
    config_sha256,
    config_to_json,
    load_config,
)
from planforge.errors import ConfigError


def test_round_trip_is_identity() -> None:
    cfg = EngineConfig()
    assert config_from_json(config_to_json(cfg)) == cfg


def test_partial_documents_keep_defaults() -> None:
    cfg = config_from_json({"decoder": {"beam_size": 5}, "train": {"lr": 0.01}})
    assert cfg.decoder.beam_size == 5
    assert cfg.decoder.top_k == 5
    assert cfg.train.lr == 0.01
    assert cfg.train.epochs == 12
    assert cfg.catalog == EngineConfig().catalog


def test_train_sampling_stays_stochastic_by_default() -> None:
    cfg = config_from_json({"train": {"sampling": {"top_k": 3}}})
    assert cfg.train.sampling.sampling == "stochastic"
    assert cfg.train.sampling.top_k == 3


def test_unknown_keys_are_rejected() -> None:
    with pytest.raises(ConfigError):
        config_from_json({"decoder": {"beam_widht": 5}})
    with pytest.raises(ConfigError):
        config_from_json({"unknown_section": {}})


def test_bad_values_are_wrapped() -> None:
    with pytest.raises(ConfigError):
        config_from_json({"decoder": {"beam_size": 0}})
    with pytest.raises(ConfigError):
        config_from_json({"decoder": {"sampling": "annealed"}})


def test_input_document_is_not_mutated() -> None:
    doc = {"train": {"sampling": {"seed": 4}, "lr": 0.2}}
    snapshot = json.loads(json.dumps(doc))
    config_from_json(doc)
    assert doc == snapshot


def test_load_config_precedence(tmp_path, monkeypatch) -> None:
    explicit = tmp_path / "a.json"
    explicit.write_text(json.dumps({"out_dir": "explicit"}))
    from_env = tmp_path / "b.json"
    from_env.write_text(json.dumps({"out_dir": "from-env"}))

    monkeypatch.setenv("PLANFORGE_CONFIG", str(from_env))
    assert load_config(str(explicit)).out_dir == "explicit"
    assert load_config(None).out_dir == "from-env"
    monkeypatch.delenv("PLANFORGE_CONFIG")
    assert load_config(None) == EngineConfig()


def test_config_sha_tracks_content() -> None:
    base = EngineConfig()
    assert config_sha256(base) == config_sha256(EngineConfig())
    changed = config_from_json({"decoder": {"beam_size": 2}})
    assert config_sha256(changed) != config_sha256(base)
