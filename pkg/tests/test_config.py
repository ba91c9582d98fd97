import pytest

from vesselmorph.config import ConfigError, RunConfig, dump_config, load_config, parse_config
from vesselmorph.morphometry import MorphometryConfig


def test_empty_config_is_defaults():
    assert parse_config("") == RunConfig()
    assert load_config(None) == RunConfig()


def test_defaults_match_module_defaults():
    cfg = RunConfig()
    assert cfg.morphometry() == MorphometryConfig()
    q = cfg.quality()
    assert (q.min_dimension_px, q.min_foreground_fraction, q.zone_outer_dd) == (512, 0.005, 2.5)


def test_parse_values_and_comments(tmp_path):
    text = """
    # thresholds
    min_dimension_px = 256
    min-foreground-fraction = 0.01   # dashes are accepted
    quality_gate = off
    exclude_hyperopia_at = 2.0
    backend = python
    posthoc = bonferroni
    """
    (tmp_path / "run.cfg").write_text(text)
    cfg = load_config(tmp_path / "run.cfg")
    assert cfg.min_dimension_px == 256 and cfg.min_foreground_fraction == 0.01
    assert cfg.quality_gate is False and cfg.exclude_hyperopia_at == 2.0
    assert cfg.morphometry().skeleton.backend == "python"
    assert cfg.posthoc == "bonferroni"


@pytest.mark.parametrize("text", ["nonsense", "colour = red", "workers = many", "posthoc = tukey",
                                  "quality_gate = maybe", "workers = 0", "zone_inner_dd = 3"])
def test_bad_config(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/run.cfg")


def test_dump_roundtrip():
    cfg = RunConfig(workers=4, seed=9, exclude_hyperopia_at=2.0, area_widths=False, out="x")
    assert parse_config(dump_config(cfg)) == cfg
    assert parse_config(dump_config(RunConfig())) == RunConfig()


def test_replace_ignores_none():
    cfg = RunConfig(workers=3).replace(workers=None, seed=5)
    assert cfg.workers == 3 and cfg.seed == 5
