import pytest

from motlines.config import Config, ConfigError, load_config, parse_overrides, read_config_file
from motlines.trackers import TrackerKind


def test_defaults():
    cfg = load_config()
    assert cfg.engine.tracker_kind is TrackerKind.KALMAN
    assert cfg.engine.gap_absolute == 10
    assert cfg.engine.extraction.l_mm == 128
    assert cfg.vector_match.min_overlap == 0.8
    assert cfg.top_hat_radius == 0


def test_file_with_and_without_sections(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("tracker = sma\nl_mm = 100  # darker admission\n\n[tracker]\nkalman_r = 1, 2, 3\n"
                 "[post]\nthickness_min = 1\nthickness_max = 4\n")
    cfg = load_config(p)
    assert cfg.engine.tracker_kind is TrackerKind.SMA
    assert cfg.engine.extraction.l_mm == 100
    assert cfg.engine.tracker.kalman_r == (1.0, 2.0, 3.0)
    assert cfg.engine.thickness_range == (1.0, 4.0)


def test_overrides_win(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("gap_absolute = 4\n")
    cfg = load_config(p, parse_overrides(["gap-absolute=7", "occlusion_spans=no"]))
    assert cfg.engine.gap_absolute == 7
    assert cfg.engine.occlusion_spans is False


@pytest.mark.parametrize("text, msg", [
    ("bogus = 1\n", "unknown"),
    ("l_mm = 300\n", "l_mm"),
    ("l_mm = 1.5\n", "integer"),
    ("tracker = median\n", "valid names"),
    ("gap_relative = 2\n", "gap_relative"),
    ("kalman_q = 0\n", "kalman_q"),
    ("angle_min = 3\n", "together"),
    ("min_overlap = 0\n", "min_overlap"),
    ("top_hat_radius = -1\n", "top_hat"),
    ("l_mm = 10\n[x]\nl_mm = 20\n", "twice"),
    ("occlusion_spans = maybe\n", "boolean"),
])
def test_invalid_values_rejected(tmp_path, text, msg):
    p = tmp_path / "bad.ini"
    p.write_text(text)
    with pytest.raises(ConfigError, match=msg):
        load_config(p)


def test_bad_override_syntax():
    with pytest.raises(ConfigError):
        parse_overrides(["gap_absolute"])


def test_as_dict_is_json_ready():
    import json

    d = Config.from_values({"tracker": TrackerKind.EMA}).as_dict()
    assert d["tracker"] == "ema"
    assert d["kalman_r"] == [1.0, 1.0, 4.0]
    json.dumps(d)


def test_read_returns_typed_values(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("filter_min_length = none\nmatch_distance = 3\n")
    assert read_config_file(p) == {"filter_min_length": None, "match_distance": 3.0}
