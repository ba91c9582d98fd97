import re

import pytest

from vesselmorph.plot import nice_ticks, panel_data, render_panel, write_plots
from vesselmorph.stats import cohort_tables
from vesselmorph.synth import simulate_cohort_metrics


@pytest.fixture(scope="module")
def tables():
    rows, groups = simulate_cohort_metrics({"HighMyopia": {"Vein.ma_deg": -10.63}}, n_per_group=20, seed=3)
    return cohort_tables(rows, groups).to_json()


def _stars(svg):
    return len(re.findall(r">\*</text>", svg))


def test_six_default_panels(tmp_path, tables):
    paths = write_plots(tables, tmp_path)
    assert sorted(p.name for p in paths) == sorted(
        ["ma_artery.svg", "ma_vein.svg", "ba_artery.svg", "ba_vein.svg", "bec_artery.svg", "bec_vein.svg"])
    assert len(write_plots(tables, tmp_path / "all", all_parameters=True)) == 10


def test_markers_follow_p_values(tables):
    for param, system in (("MA", "Vein"), ("MA", "Artery"), ("BA", "Vein")):
        _, pairs = panel_data(tables, param, system)
        expected = sum(1 for r in tables["table2"] + tables["table3"]
                       if r["parameter"] == param and r["system"] == system and r["p_value"] < 0.05)
        assert len(pairs) == expected
        assert _stars(render_panel(tables, param, system)) == expected
    # the injected shift is detected on vein MA
    assert _stars(render_panel(tables, "MA", "Vein")) >= 3


def test_no_marker_for_p_020(tables):
    t = {k: [dict(r) for r in v] if isinstance(v, list) else v for k, v in tables.items()}
    for r in t["table2"] + t["table3"]:
        r["p_value"] = 0.20
    assert _stars(render_panel(t, "MA", "Vein")) == 0


def test_byte_stable(tmp_path, tables):
    a = [p.read_bytes() for p in write_plots(tables, tmp_path / "a")]
    b = [p.read_bytes() for p in write_plots(tables, tmp_path / "b")]
    assert a == b
    assert a[0].startswith(b"<svg")


def test_missing_group_renders(tables):
    t = {k: [dict(r) for r in v] if isinstance(v, list) else v for k, v in tables.items()}
    for r in t["table1"]:
        if r["group"] == "LowMyopia":
            r["mean"] = r["sd"] = None
    assert "n/a" in render_panel(t, "BA", "Artery")


def test_nice_ticks():
    assert nice_ticks(0, 100) == [0, 20, 40, 60, 80, 100]
    assert nice_ticks(0, 1.3) == [0, 0.5, 1.0]
    assert nice_ticks(0, 1.1) == [0, 0.25, 0.5, 0.75, 1.0]
    assert nice_ticks(0, 0) == [0]
