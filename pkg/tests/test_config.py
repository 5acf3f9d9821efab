"""Config document round trips and validation."""
import json

import pytest

from gridwall.config import (
    ConfigError,
    RewardConfig,
    TrackConfig,
    load_track_config,
    save_track_config,
    track_config_from_dict,
    track_config_hash,
    track_config_to_json,
)


class TestRoundTrip:
    def test_json_round_trip(self, tmp_path):
        cfg = TrackConfig()
        path = tmp_path / "track.json"
        save_track_config(cfg, path)
        assert load_track_config(path) == cfg

    def test_hash_stable_under_round_trip(self, tmp_path):
        cfg = TrackConfig()
        path = tmp_path / "track.json"
        save_track_config(cfg, path)
        assert track_config_hash(load_track_config(path)) == track_config_hash(cfg)

    def test_hash_changes_with_content(self):
        assert track_config_hash(TrackConfig()) != track_config_hash(TrackConfig(t0=94.0))


class TestValidation:
    def test_unknown_top_level_key_rejected(self):
        doc = json.loads(track_config_to_json(TrackConfig()))
        doc["mystery"] = 1
        with pytest.raises(ConfigError, match="mystery"):
            track_config_from_dict(doc)

    def test_unknown_nested_key_rejected(self):
        doc = json.loads(track_config_to_json(TrackConfig()))
        doc["compounds"]["soft"]["grip"] = 2.0
        with pytest.raises(ConfigError, match="grip"):
            track_config_from_dict(doc)

    def test_positive_interaction_slope_rejected(self):
        doc = json.loads(track_config_to_json(TrackConfig()))
        doc["interaction"]["a"] = 0.1
        with pytest.raises(ConfigError):
            track_config_from_dict(doc)

    def test_wear_ordering_enforced(self):
        doc = json.loads(track_config_to_json(TrackConfig()))
        doc["compounds"]["hard"]["wear_rate"] = 0.09
        with pytest.raises(ConfigError):
            track_config_from_dict(doc)

    def test_gamma_fixed_at_one(self):
        with pytest.raises(ConfigError):
            RewardConfig(gamma=0.99)
