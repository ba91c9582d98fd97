"""Main angle, branching/bifurcation angles and coefficients inside the measurement annulus."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage as ndi

from .geometry import DirectionError, angle_between, branch_pixels, fit_direction
from .skeleton import SkeletonConfig, bbox_slices, extract_graph, preprocess_mask, thin
from .topology import (
    ClassifyConfig,
    JunctionKind,
    NoRootedVessels,
    _dilate,
    assign_strahler,
    classify_junctions,
    find_roots,
    fit_junction,
    orient_and_break_cycles,
)

SYSTEMS = ("Artery", "Vein")


@dataclass(frozen=True)
class MeasurementZone:
    disc: object
    inner_dd: float = 0.5  # from the disc edge, in disc diameters
    outer_dd: float = 2.0

    def __post_init__(self):
        if not 0 < self.inner_dd < self.outer_dd:
            raise ValueError("zone needs 0 < inner < outer")

    @property
    def r_min(self):
        return self.disc.radius + self.inner_dd * self.disc.diameter

    @property
    def r_max(self):
        return self.disc.radius + self.outer_dd * self.disc.diameter


def in_zone(point, zone):
    x, y = point
    cx, cy = zone.disc.center
    d = math.hypot(x - cx, y - cy)
    return zone.r_min <= d <= zone.r_max


def coefficient(d0, d1, d2):
    """(d1^2 + d2^2) / d0^2."""
    return (d1 * d1 + d2 * d2) / (d0 * d0)


def direction_window(parent_diameter, minimum=10):
    return int(max(minimum, math.ceil(parent_diameter)))


def edge_direction_at_junction(polyline, window, skip=0.0, span=None):
    """Unit direction leaving the junction.

    ``polyline`` must start at the junction. With ``skip == 0`` the line is
    fitted over the first ``window`` pixels. Otherwise pixels whose distance
    from the junction lies in ``[skip, skip + span]`` are used, which keeps the
    fit clear of the skeleton distortion right at the branch point; edges too
    short for that fall back to the first ``window`` pixels.
    """
    return fit_direction(branch_pixels(polyline, window, skip, span))


class WidthMap:
    """Vessel area owned by each skeleton pixel (nearest-pixel assignment).

    Summing the area over a run of centreline pixels and dividing by the run's
    length gives a calibre estimate that averages out the pixel quantisation
    of single distance-transform samples.
    """

    def __init__(self, mask, forest):
        mask = np.asarray(mask, dtype=bool)
        owner = np.full(mask.shape, -1, dtype=np.int64)
        index = np.zeros(mask.shape, dtype=np.int64)
        keys = []
        for ti, tree in enumerate(forest):
            for eid in sorted(tree.edges):
                poly = tree.edges[eid].polyline
                owner[poly[:, 1], poly[:, 0]] = len(keys)
                index[poly[:, 1], poly[:, 0]] = np.arange(len(poly))
                keys.append((ti, eid, len(poly)))
        self.counts = {}
        if not keys:
            return
        box = bbox_slices(mask | (owner >= 0))
        owner, index, mask = owner[box], index[box], mask[box]
        _, (iy, ix) = ndi.distance_transform_edt(owner < 0, return_indices=True)
        ys, xs = np.nonzero(mask)
        ko = owner[iy[ys, xs], ix[ys, xs]]
        ki = index[iy[ys, xs], ix[ys, xs]]
        offsets = np.concatenate([[0], np.cumsum([k[2] for k in keys])])
        flat = np.bincount(offsets[ko] + ki, minlength=int(offsets[-1]))
        start = 0
        for ti, eid, n in keys:
            self.counts[(ti, eid)] = flat[start:start + n]
            start += n

    def diameter(self, key, keep, polyline):
        counts = self.counts.get(key)
        idx = np.flatnonzero(keep)
        if counts is None or len(idx) < 2:
            return None
        i, j = int(idx[0]), int(idx[-1])
        p = polyline.astype(float)
        chord = math.hypot(*(p[j] - p[i]))
        if chord == 0:
            return None
        return float(counts[i:j + 1].sum()) / (chord * (j - i + 1) / (j - i))


def edge_diameter(edge, tree, exclusion, widths=None, key=None):
    """Calibre of an edge, ignoring pixels within ``exclusion`` of an end junction.

    Uses the area estimate when a ``WidthMap`` is given, else 2 x median radius.
    """
    keep = np.ones(len(edge.radii), dtype=bool)
    pts = edge.polyline.astype(float)
    for n in (edge.parent, edge.child):
        if n == tree.root or len(tree.children.get(n, ())) < 2:
            continue
        x, y = tree.positions[n]
        keep &= np.hypot(pts[:, 0] - x, pts[:, 1] - y) > exclusion
    if not keep.any():
        keep[:] = True
    if widths is not None:
        # free ends too: a terminal pixel owns the whole rounded tip
        run = keep.copy()
        for p in (pts[0], pts[-1]):
            run &= np.hypot(pts[:, 0] - p[0], pts[:, 1] - p[1]) > exclusion
        d = widths.diameter((key, edge.id), run, edge.polyline)
        if d is not None:
            return d
    return 2.0 * float(np.median(edge.radii[keep]))


def parent_diameter(tree, edge, widths=None, key=None):
    rough = 2.0 * float(np.median(edge.radii))
    return edge_diameter(edge, tree, rough, widths, key)


@dataclass
class JunctionMeasurement:
    node: int
    x: float
    y: float
    kind: str
    angle_deg: float | None
    coefficient: float | None
    d0: float
    d1: float
    d2: float


@dataclass
class MorphometryRecord:
    id: str
    system: str
    ma_deg: float | None = None
    ba_deg: list = field(default_factory=list)
    bc: list = field(default_factory=list)
    bea_deg: list = field(default_factory=list)
    bec: list = field(default_factory=list)
    counts: dict = field(default_factory=lambda: {"branching": 0, "bifurcation": 0, "crossing_excluded": 0, "skipped": 0})
    junctions: list = field(default_factory=list)
    ma_points: list = field(default_factory=list)
    error: str | None = None

    @property
    def ok(self):
        return self.error is None

    def to_json(self):
        d = {
            "id": self.id,
            "system": self.system,
            "ma_deg": self.ma_deg,
            "ba_deg": list(self.ba_deg),
            "bc": list(self.bc),
            "bea_deg": list(self.bea_deg),
            "bec": list(self.bec),
            "counts": dict(self.counts),
            "junctions": [asdict(j) for j in self.junctions],
            "ma_points": [list(p) for p in self.ma_points],
        }
        if self.error is not None:
            d["error"] = self.error
        return d

    @classmethod
    def from_json(cls, d):
        rec = cls(d["id"], d["system"], d.get("ma_deg"), list(d.get("ba_deg", [])), list(d.get("bc", [])),
                  list(d.get("bea_deg", [])), list(d.get("bec", [])), dict(d.get("counts", {})),
                  [JunctionMeasurement(**j) for j in d.get("junctions", [])],
                  [tuple(p) for p in d.get("ma_points", [])], d.get("error"))
        return rec


def measure_branch_params(tree, classes, zone, window_min=10, counts=None, widths=None, key=None,
                          skip=1.0, span=2.0, refine=True):
    """Angles and coefficients of non-crossing junctions inside the zone.

    ``skip`` and ``span`` are in units of the direction window; ``skip=0``
    fits the first window pixels directly. Returns (ba, bc, bea, bec, measurements).
    """
    ba, bc, bea, bec, meas = [], [], [], [], []
    counts = counts if counts is not None else {}
    for jc in classes:
        pos = tree.positions[jc.node]
        if jc.kind == JunctionKind.CrossingExcluded:
            if in_zone(pos, zone):
                counts["crossing_excluded"] = counts.get("crossing_excluded", 0) + 1
            continue
        parent = tree.edges[jc.parent_edge]
        d0 = parent_diameter(tree, parent, widths, key)
        e1, e2 = (tree.edges[i] for i in jc.daughters)
        d1 = edge_diameter(e1, tree, d0, widths, key)
        d2 = edge_diameter(e2, tree, d0, widths, key)
        window = direction_window(d0, window_min)
        try:
            (u, v, _), hit = fit_junction(tree, jc.node, (e1.id, e2.id, parent.id), window, skip, span)
        except DirectionError:
            if in_zone(pos, zone):
                counts["skipped"] = counts.get("skipped", 0) + 1
            continue
        if refine:
            # the thinned junction drifts distally on thick vessels; use the centreline meeting point
            if hit is not None and math.hypot(hit[0] - pos[0], hit[1] - pos[1]) <= d0:
                pos = (float(hit[0]), float(hit[1]))
        if not in_zone(pos, zone):
            continue
        angle = angle_between(u, v)
        coef = coefficient(d0, d1, d2)
        if jc.kind == JunctionKind.Branching:
            ba.append(angle)
            bc.append(coef)
            counts["branching"] = counts.get("branching", 0) + 1
        else:
            bea.append(angle)
            bec.append(coef)
            counts["bifurcation"] = counts.get("bifurcation", 0) + 1
        meas.append(JunctionMeasurement(jc.node, float(pos[0]), float(pos[1]), jc.kind.value, angle, coef, d0, d1, d2))
    return ba, bc, bea, bec, meas


def main_vessel_endpoint(tree):
    """Distal node of the last maximal-order edge reached from the root."""
    top = tree.max_order
    node = tree.root
    last = None
    while True:
        cands = [tree.edges[i] for i in tree.children[node] if tree.edges[i].order == top]
        if not cands:
            break
        e = max(cands, key=lambda e: (float(np.median(e.radii)), -e.id))
        last = e.child
        node = e.child
    return last


def measure_main_angle(forest, disc):
    """Angle at the disc centre between the superior and inferior main vessels.

    Returns (angle_deg or None, [superior point, inferior point]).
    """
    cx, cy = disc.center
    sup = [t for t in forest if t.positions[t.root][1] < cy and t.edges]
    inf = [t for t in forest if t.positions[t.root][1] >= cy and t.edges]
    if not sup or not inf:
        return None, []
    points = []
    for trees in (sup, inf):
        t = max(trees, key=lambda t: (t.root_diameter, -t.root))
        n = main_vessel_endpoint(t)
        if n is None:
            return None, []
        points.append(tuple(float(v) for v in t.positions[n]))
    u = (points[0][0] - cx, points[0][1] - cy)
    v = (points[1][0] - cx, points[1][1] - cy)
    if u == (0.0, 0.0) or v == (0.0, 0.0):
        return None, points
    return angle_between(u, v), points


@dataclass(frozen=True)
class MorphometryConfig:
    skeleton: SkeletonConfig = SkeletonConfig()
    classify: ClassifyConfig = ClassifyConfig()
    zone_inner_dd: float = 0.5
    zone_outer_dd: float = 2.0
    root_reach: float = 1.5
    window_min_px: int = 10
    direction_skip: float = 1.0  # in direction windows; 0 fits from the junction pixel
    direction_span: float = 2.0
    area_widths: bool = True
    refine_junctions: bool = True


def build_forest(mask, disc, system, config=MorphometryConfig(), return_mask=False):
    clean = preprocess_mask(mask, config.skeleton)
    graph = extract_graph(thin(clean, config.skeleton.backend), clean, config.skeleton)
    if not graph.edges:
        raise NoRootedVessels(f"{system}: empty vessel mask")
    roots = find_roots(graph, disc, config.root_reach)
    forest = orient_and_break_cycles(graph, roots, system)
    for t in forest:
        assign_strahler(t)
    return (forest, clean) if return_mask else forest


def analyze_system(record_id, mask, other_mask, disc, system, config=MorphometryConfig()):
    rec = MorphometryRecord(record_id, system)
    try:
        forest, clean = build_forest(mask, disc, system, config, return_mask=True)
    except NoRootedVessels as exc:
        rec.error = f"NoRootedVessels: {exc}"
        return rec
    zone = MeasurementZone(disc, config.zone_inner_dd, config.zone_outer_dd)
    dilated = _dilate(other_mask, config.classify.crossing_dilation_px)
    widths = WidthMap(clean, forest) if config.area_widths else None
    for ti, tree in enumerate(forest):
        classes = classify_junctions(tree, config=config.classify, dilated=dilated)
        ba, bc, bea, bec, meas = measure_branch_params(
            tree, classes, zone, config.window_min_px, rec.counts, widths, ti,
            config.direction_skip, config.direction_span, config.refine_junctions)
        rec.ba_deg += ba
        rec.bc += bc
        rec.bea_deg += bea
        rec.bec += bec
        rec.junctions += meas
    rec.ma_deg, rec.ma_points = measure_main_angle(forest, disc)
    return rec


def analyze_image(record, config=MorphometryConfig()):
    """(artery record, vein record); a failed system carries ``error`` instead of values."""
    a = analyze_system(record.id, record.artery_mask, record.vein_mask, record.disc, "Artery", config)
    v = analyze_system(record.id, record.vein_mask, record.artery_mask, record.disc, "Vein", config)
    return a, v


def mean_or_none(values):
    return float(np.mean(values)) if len(values) else None


def flatten(record):
    """One CSV row (dict) for a record; list fields become mean and count."""
    row = {"id": record.id, "system": record.system, "status": "ok" if record.ok else "error",
           "ma_deg": record.ma_deg}
    for key in ("ba_deg", "bc", "bea_deg", "bec"):
        vals = getattr(record, key)
        row[f"{key}_mean"] = mean_or_none(vals)
        row[f"{key}_n"] = len(vals)
    for k in ("branching", "bifurcation", "crossing_excluded", "skipped"):
        row[k] = record.counts.get(k, 0)
    row["error"] = record.error or ""
    return row


FLAT_COLUMNS = ["id", "system", "status", "ma_deg", "ba_deg_mean", "ba_deg_n", "bc_mean", "bc_n",
                "bea_deg_mean", "bea_deg_n", "bec_mean", "bec_n", "branching", "bifurcation",
                "crossing_excluded", "skipped", "error"]
