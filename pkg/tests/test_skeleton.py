import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage as ndi

from vesselmorph import kernels
from vesselmorph.skeleton import SkeletonConfig, extract_graph, graph_json, preprocess_mask, skeleton_png, thin

from conftest import EIGHT, capped_line, n_components, neighbor_counts, random_blobs

needs_c = pytest.mark.skipif(kernels.thin_c is None, reason="compiled kernel not built")


def _is_thin(skel):
    full = ndi.binary_erosion(skel, structure=EIGHT, border_value=0)
    return not full.any()


# -- preprocess -------------------------------------------------------------

def test_preprocess_removes_speck_keeps_vessel():
    m = np.zeros((60, 60), bool)
    m[5, 5:10] = True  # 5-px speck
    m[20:30, 5:55] = True  # 500-px vessel
    out = preprocess_mask(m)
    assert not out[5].any()
    assert np.array_equal(out[20:30], m[20:30])


def test_preprocess_empty_and_hole():
    assert not preprocess_mask(np.zeros((10, 10), bool)).any()
    m = np.zeros((40, 40), bool)
    m[10:20, 5:35] = True
    m[14:16, 19:21] = False  # 4-px hole
    out = preprocess_mask(m)
    assert out[14:16, 19:21].all()
    big = m.copy()
    big[12:18, 10:30] = False  # 120-px hole stays
    assert not preprocess_mask(big)[12:18, 10:30].any()


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_preprocess_output_within_input_or_holes(seed):
    m = random_blobs(np.random.default_rng(seed), 64)
    out = preprocess_mask(m)
    filled = ndi.binary_fill_holes(m)
    assert not (out & ~filled).any()


# -- thin --------------------------------------------------------------------

def test_thin_horizontal_bar_center_row():
    m = np.zeros((20, 70), bool)
    m[9:12, 10:60] = True
    s = thin(m).image
    rows, cols = np.nonzero(s)
    assert set(rows) == {10}
    assert 45 <= len(cols) <= 50
    assert n_components(s) == 1


def test_thin_single_pixel():
    m = np.zeros((7, 7), bool)
    m[3, 4] = True
    assert thin(m).pixels == {(4, 3)}


def test_thin_plus_sign_single_degree4_cluster():
    m = np.zeros((61, 61), bool)
    m[29:32, 5:56] = True
    m[5:56, 29:32] = True
    s = thin(m).image
    # oracle: branch pixels are those with 3+ skeleton neighbours
    branch = s & (neighbor_counts(s) >= 3)
    lab, n = ndi.label(branch, structure=EIGHT)
    assert n == 1
    arms = s & ~ndi.binary_dilation(branch, structure=EIGHT)
    assert n_components(arms) == 4


def test_thin_empty():
    assert len(thin(np.zeros((5, 5), bool))) == 0


def test_skeleton_type_fields():
    m = np.zeros((9, 30), bool)
    m[3:6, 2:28] = True
    sk = thin(m)
    assert sk.source_dims == (9, 30)
    assert all(m[y, x] for x, y in sk.pixels)


@given(st.integers(0, 100_000))
@settings(max_examples=60, deadline=None)
def test_thin_properties_random_blobs(seed):
    m = preprocess_mask(random_blobs(np.random.default_rng(seed)))
    s = thin(m).image
    assert not (s & ~m).any()
    assert n_components(s) == n_components(m)
    assert _is_thin(s)
    again = thin(s).image
    assert np.array_equal(again, s)


@needs_c
@given(st.integers(0, 100_000))
@settings(max_examples=40, deadline=None)
def test_backends_identical(seed):
    m = preprocess_mask(random_blobs(np.random.default_rng(seed), 80))
    assert np.array_equal(thin(m, "python").image, thin(m, "cython").image)


def test_unknown_backend():
    with pytest.raises(ValueError):
        thin(np.ones((4, 4), bool), backend="fortran")


# -- extract_graph --------------------------------------------------------------

def _graph(mask):
    m = preprocess_mask(mask)
    return extract_graph(thin(m), m)


def test_graph_straight_chain():
    m = np.zeros((10, 60), bool)
    m[5, 5:55] = True
    g = _graph(m)
    kinds = sorted(n.kind for n in g.nodes.values())
    assert kinds == ["Endpoint", "Endpoint"]
    assert len(g.edges) == 1
    (e,) = g.edges.values()
    assert len(e.polyline) == 50


def test_graph_y_shape():
    m = np.zeros((80, 80), bool)
    for a, b, r in (((40, 75), (40, 40), 2.5), ((40, 40), (15, 10), 2), ((40, 40), (65, 10), 2)):
        m |= capped_line(m.shape, a, b, r)
    g = _graph(m)
    kinds = sorted(n.kind for n in g.nodes.values())
    assert kinds == ["Endpoint"] * 3 + ["Junction"]
    j = next(n for n in g.nodes.values() if n.kind == "Junction")
    assert g.degree(j.id) == 3
    assert len(g.edges) == 3


def _brute_edt(mask, r, c):
    bg = np.argwhere(~np.pad(mask, 1))  # padded so the border counts as background
    return float(np.sqrt(((bg - (r + 1, c + 1)) ** 2).sum(axis=1)).min())


def test_graph_radius_disk_on_chain():
    m = np.zeros((60, 60), bool)
    m[30, 5:55] = True
    yy, xx = np.mgrid[:60, :60]
    m |= (xx - 30) ** 2 + (yy - 30) ** 2 <= 36
    g = _graph(m)
    for e in g.edges.values():
        for (x, y), rad in zip(e.polyline, e.radii):
            assert rad == pytest.approx(_brute_edt(m, y, x))
            if (x, y) == (30, 30):
                assert abs(rad - 6) <= 1


@pytest.mark.parametrize("w", [2, 3, 4, 6])
def test_radius_sanity_capped_line(w):
    m = capped_line((60, 120), (15, 30), (105, 38), w)
    g = _graph(m)
    (e,) = g.edges.values()
    mid = e.radii[len(e.radii) // 3: 2 * len(e.radii) // 3]
    assert np.all((mid >= w - 1) & (mid <= w + 1))


@given(st.integers(0, 100_000))
@settings(max_examples=40, deadline=None)
def test_graph_consistency(seed):
    g = _graph(random_blobs(np.random.default_rng(seed)))
    deg = sum(g.degree(n) for n in g.nodes)
    assert deg == 2 * len(g.edges)
    for e in g.edges.values():
        assert len(e.polyline) >= 2
        assert len(e.radii) == len(e.polyline)
        assert np.all(e.radii >= 0.5)
        steps = np.abs(np.diff(e.polyline, axis=0))
        assert steps.max() <= 1 and np.all(steps.sum(axis=1) >= 1)
    for n in g.nodes.values():
        d = g.degree(n.id)
        assert (n.kind == "Endpoint" and d == 1) or (n.kind == "Junction" and d >= 3)


def test_graph_empty():
    g = extract_graph(thin(np.zeros((8, 8), bool)), np.zeros((8, 8), bool))
    assert not g.nodes and not g.edges


def test_junction_cluster_merge_config():
    m = np.zeros((61, 61), bool)
    m[29:32, 5:56] = True
    m[5:56, 29:32] = True
    g = extract_graph(thin(m), m, SkeletonConfig())
    assert sum(n.kind == "Junction" for n in g.nodes.values()) == 1


def test_debug_dumps(tmp_path):
    m = np.zeros((20, 40), bool)
    m[8:11, 3:37] = True
    sk = thin(m)
    skeleton_png(sk, tmp_path / "s.png")
    graph_json(extract_graph(sk, m), tmp_path / "g.json")
    d = json.loads((tmp_path / "g.json").read_text())
    assert set(d) == {"nodes", "edges"}
    assert set(d["edges"][0]) == {"id", "a", "b", "length_px", "mean_radius_px"}
    from PIL import Image
    im = np.asarray(Image.open(tmp_path / "s.png"))
    assert set(np.unique(im)) <= {0, 255} and (im == 255).sum() == len(sk)
