import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vesselmorph.ingest import (
    DiscAnnotation, IngestError, LabeledFundus, QualityConfig, Reason, RefractionGroup, classify_refraction,
    load_manifest, manifest_rows, quality_gate, record_row, write_disc, write_manifest, write_mask,
)

G = RefractionGroup
RANK = {G.Normal: 0, G.LowMyopia: 1, G.ModerateMyopia: 2, G.HighMyopia: 3}


@pytest.mark.parametrize("ser,group", [
    (0.0, G.Normal), (-0.49, G.Normal), (3.0, G.Normal),
    (-0.5, G.LowMyopia), (-2.99, G.LowMyopia),
    (-3.0, G.ModerateMyopia), (-5.99, G.ModerateMyopia),
    (-6.0, G.HighMyopia), (-12.0, G.HighMyopia),
])
def test_refraction_boundaries(ser, group):
    assert classify_refraction(ser) is group


@given(st.floats(-30, 30, allow_nan=False), st.floats(0, 10))
def test_refraction_monotone(ser, drop):
    assert RANK[classify_refraction(ser - drop)] >= RANK[classify_refraction(ser)]


def test_refraction_rejects_nan():
    with pytest.raises(IngestError):
        classify_refraction(math.nan)


def test_hyperopia_exclusion_flag():
    assert classify_refraction(2.5) is G.Normal
    assert classify_refraction(2.5, exclude_hyperopia_at=2.0) is None
    assert classify_refraction(1.9, exclude_hyperopia_at=2.0) is G.Normal


def _masks(shape=(1024, 1024), frac=0.04):
    a = np.zeros(shape, bool)
    rows = int(shape[0] * frac)
    a[:rows, :] = True
    return a, a.copy()


def _record(disc=DiscAnnotation((512, 512), 100), shape=(1024, 1024), empty_vein=False):
    a, v = _masks(shape)
    if empty_vein:
        v[:] = False
    return LabeledFundus("x", "Right", -1.0, 10.0, a, v, disc)


def test_gate_accepts_clean_image():
    r = quality_gate(_record())
    assert r.accepted and r.reasons == ()


def test_gate_empty_mask():
    r = quality_gate(_record(empty_vein=True))
    assert not r and Reason.EmptyMask in r.reasons


def test_gate_disc_out_of_bounds():
    r = quality_gate(_record(DiscAnnotation((-5, 10), 100)))
    assert Reason.DiscOutOfBounds in r.reasons


def test_gate_small_image_and_zone():
    r = quality_gate(_record(DiscAnnotation((200, 200), 60), shape=(400, 400)))
    assert Reason.SmallImage in r.reasons
    r = quality_gate(_record(DiscAnnotation((100, 512), 100)))
    assert r.reasons == (Reason.ZoneOutOfBounds,)
    assert quality_gate(_record(DiscAnnotation((100, 512), 100)), QualityConfig(zone_outer_dd=0.5))


def test_disc_validation():
    with pytest.raises(IngestError):
        DiscAnnotation((1, 1), 0)
    with pytest.raises(IngestError):
        DiscAnnotation.from_json({"center_x": 1})


def _write_dataset(tmp_path, n=3):
    (tmp_path / "m").mkdir()
    rows = []
    for i in range(n):
        a, v = _masks((64, 80))
        write_mask(a, tmp_path / f"m/a{i}.png")
        write_mask(v, tmp_path / f"m/v{i}.png")
        write_disc(DiscAnnotation((40.5, 30.25), 12.0), tmp_path / f"m/d{i}.json")
        rows.append({"id": f"img{i}", "eye": "LR"[i % 2], "ser_diopters": repr(-1.25 * i), "age_years": "9.5",
                     "artery_mask": f"m/a{i}.png", "vein_mask": f"m/v{i}.png", "disc_json": f"m/d{i}.json"})
    write_manifest(rows, tmp_path / "manifest.csv")
    return rows


def test_manifest_roundtrip_lossless(tmp_path):
    _write_dataset(tmp_path)
    recs = load_manifest(tmp_path / "manifest.csv")
    assert [r.id for r in recs] == ["img0", "img1", "img2"]
    assert recs[0].eye == "Left" and recs[1].eye == "Right" and recs[1].ser == -1.25 and recs[1].age == 9.5
    assert recs[0].disc == DiscAnnotation((40.5, 30.25), 12.0)
    assert recs[0].artery_mask.shape == (64, 80) and recs[0].artery_mask.dtype == bool
    rows = []
    for r in recs:
        row = record_row(r)
        for k in ("artery_mask", "vein_mask", "disc_json"):
            row[k] = str(r.paths[k].relative_to(tmp_path))
        rows.append(row)
    write_manifest(rows, tmp_path / "again.csv")
    again = load_manifest(tmp_path / "again.csv")
    for x, y in zip(recs, again):
        assert (x.id, x.eye, x.ser, x.age, x.disc) == (y.id, y.eye, y.ser, y.age, y.disc)


def test_manifest_bad_rows_are_reported(tmp_path):
    rows = _write_dataset(tmp_path)
    rows.append(dict(rows[0], id="bad_eye", eye="X"))
    rows.append(dict(rows[0], id="missing_file", artery_mask="m/nope.png"))
    rows.append(dict(rows[0], id="bad_ser", ser_diopters="abc"))
    write_manifest(rows, tmp_path / "manifest.csv")
    recs, errs = load_manifest(tmp_path / "manifest.csv", with_errors=True)
    assert len(recs) == 3
    assert sorted(e.id for e in errs) == ["bad_eye", "bad_ser", "missing_file"]
    assert "not found" in str([e for e in errs if e.id == "missing_file"][0])
    assert len(manifest_rows(tmp_path / "manifest.csv")) == 6


def test_manifest_header_required(tmp_path):
    (tmp_path / "m.csv").write_text("id,eye\nx,L\n")
    with pytest.raises(IngestError):
        load_manifest(tmp_path / "m.csv")


def test_disc_json_format(tmp_path):
    write_disc(DiscAnnotation((1.0, 2.0), 3.0), tmp_path / "d.json")
    assert json.loads((tmp_path / "d.json").read_text()) == {"center_x": 1.0, "center_y": 2.0, "diameter_px": 3.0}
