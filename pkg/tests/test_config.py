import json

import pytest

from reviewkit.config import EngineConfig, load_config
from reviewkit.errors import ValidationError


class TestEngineConfig:
    def test_defaults(self):
        config = EngineConfig()
        assert config.provider == "mock"
        assert config.embedding_dim == 256
        assert config.cluster_threshold == 0.75
        assert (config.weight_filter, config.weight_propagation,
                config.weight_similarity) == (10.0, 5.0, 1.0)
        assert config.fanout == 8
        assert config.provider_timeout == 10.0

    def test_threshold_must_be_in_unit_interval(self):
        with pytest.raises(ValidationError):
            EngineConfig(cluster_threshold=0.0)
        with pytest.raises(ValidationError):
            EngineConfig(cluster_threshold=1.01)

    def test_negative_weights_rejected(self):
        with pytest.raises(ValidationError):
            EngineConfig(weight_filter=-1.0)

    def test_fanout_must_be_positive(self):
        with pytest.raises(ValidationError):
            EngineConfig(fanout=0)

    def test_remote_requires_url(self):
        with pytest.raises(ValidationError):
            EngineConfig(provider="remote")
        EngineConfig(provider="remote", remote_url="http://localhost:9")

    def test_unknown_provider_rejected(self):
        with pytest.raises(ValidationError):
            EngineConfig(provider="other")

    def test_round_trips_through_dict(self):
        config = EngineConfig(cluster_threshold=0.9, fanout=3)
        assert EngineConfig.from_dict(config.to_dict()) == config


class TestLoadConfig:
    def test_file_overrides_defaults(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"cluster_threshold": 0.5, "fanout": 2}))
        config = load_config(path, env={})
        assert config.cluster_threshold == 0.5
        assert config.fanout == 2
        assert config.embedding_dim == 256

    def test_env_overrides_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"cluster_threshold": 0.5}))
        config = load_config(path, env={
            "REVIEWKIT_CLUSTER_THRESHOLD": "0.9",
            "REVIEWKIT_FANOUT": "4",
            "REVIEWKIT_AUTO_PROPAGATE": "false",
        })
        assert config.cluster_threshold == 0.9
        assert config.fanout == 4
        assert config.auto_propagate is False

    def test_missing_file_is_an_error(self, tmp_path):
        with pytest.raises(ValidationError):
            load_config(tmp_path / "absent.json", env={})

    def test_invalid_json_is_an_error(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{nope")
        with pytest.raises(ValidationError):
            load_config(path, env={})

    def test_no_file_no_env_gives_defaults(self):
        assert load_config(None, env={}) == EngineConfig()
