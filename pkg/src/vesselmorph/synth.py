"""Synthetic vascular forests with known geometry, rasterised into artery/vein masks.

Trees are scripted per trunk: a trunk leaves the optic disc at a polar angle
(counter-clockwise from +x, image y pointing down) and splits recursively. At
a symmetric split both daughters get equal radii; at a monopodial split a thin
side branch leaves a continuing main vessel. Radii follow Murray's law
``r0**k = r1**k + r2**k`` before jitter.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .ingest import DiscAnnotation, LabeledFundus, RefractionGroup, write_disc, write_manifest, write_mask
from .morphometry import MeasurementZone, coefficient, in_zone
from .topology import _dilate, strahler_order


class SynthSpecError(ValueError):
    pass


@dataclass
class BranchProgram:
    depth: int = 3
    angles: list = field(default_factory=lambda: [70.0, 60.0, 50.0])  # daughter angle per split level
    lengths: list = field(default_factory=lambda: [90.0, 60.0, 50.0, 40.0])  # trunk first, then per level
    pattern: str = "S"  # per split level: S symmetric, M monopodial; last char repeats
    murray: float = 3.0
    side_fraction: float = 0.3  # flow share of a monopodial side branch


@dataclass
class TrunkSpec:
    name: str
    polar_deg: float
    root_radius: float
    elevation_deg: float = 0.0
    program: BranchProgram = field(default_factory=BranchProgram)
    start_frac: float = 0.8  # trunk starts this many disc radii from the centre


@dataclass
class CrossingSpec:
    """A straight vessel of ``system`` drawn over a junction of the other system."""
    system: str
    trunk: str
    junction: int  # index in the trunk's pre-order junction list
    length: float = 40.0
    radius: float = 3.0
    angle_deg: float = 90.0  # relative to the parent segment direction


@dataclass
class SynthSpec:
    width: int = 1024
    height: int = 1024
    disc_center: tuple = (512.0, 512.0)
    disc_diameter: float = 100.0
    artery: list = field(default_factory=list)
    vein: list = field(default_factory=list)
    crossings: list = field(default_factory=list)
    angle_jitter_sd: float = 0.0
    radius_jitter_sd: float = 0.0  # relative
    seed: int = 0

    @property
    def disc(self):
        return DiscAnnotation(tuple(self.disc_center), self.disc_diameter)

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, d):
        def trunk(t):
            t = dict(t)
            t["program"] = BranchProgram(**t.get("program", {}))
            return TrunkSpec(**t)

        d = dict(d)
        d["artery"] = [trunk(t) for t in d.get("artery", [])]
        d["vein"] = [trunk(t) for t in d.get("vein", [])]
        d["crossings"] = [CrossingSpec(**c) for c in d.get("crossings", [])]
        if "disc_center" in d:
            d["disc_center"] = tuple(d["disc_center"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise SynthSpecError(str(exc)) from exc


@dataclass
class Segment:
    name: str
    start: np.ndarray
    end: np.ndarray
    radius: float
    children: list = field(default_factory=list)
    order: int = 0

    @property
    def direction(self):
        d = self.end - self.start
        return d / np.linalg.norm(d)


def _rot(v, deg):
    a = math.radians(deg)
    # image y points down: positive deg turns counter-clockwise on screen
    c, s = math.cos(a), math.sin(a)
    return np.array([c * v[0] + s * v[1], -s * v[0] + c * v[1]])


def _validate(spec):
    for system in ("artery", "vein"):
        for t in getattr(spec, system):
            p = t.program
            if t.root_radius < 1:
                raise SynthSpecError(f"trunk {t.name}: root radius below 1 px")
            if len(p.lengths) < p.depth + 1 or len(p.angles) < p.depth:
                raise SynthSpecError(f"trunk {t.name}: program needs {p.depth + 1} lengths and {p.depth} angles")
            for a in p.angles[: p.depth]:
                if not 0 < a < 180:
                    raise SynthSpecError(f"trunk {t.name}: daughter angle {a} outside (0, 180)")
            if not p.pattern or set(p.pattern) - {"S", "M"}:
                raise SynthSpecError(f"trunk {t.name}: pattern must use S/M")


def _grow(name, start, direction, radius, level, depth, prog, rng, spec):
    length = prog.lengths[level]
    seg = Segment(name, start, start + direction * length, radius)
    if level >= depth:
        return seg
    kind = prog.pattern[min(level, len(prog.pattern) - 1)]
    total = prog.angles[level] + (rng.normal(0, spec.angle_jitter_sd) if spec.angle_jitter_sd else 0.0)
    k = prog.murray
    if kind == "S":
        r1 = r2 = radius * 2 ** (-1 / k)
        w1 = 0.5
    else:
        s = prog.side_fraction
        r1 = radius * (1 - s) ** (1 / k)  # main
        r2 = radius * s ** (1 / k)  # side
        w1 = r2 ** 2 / (r1 ** 2 + r2 ** 2)
    if spec.radius_jitter_sd:
        r1 *= 1 + rng.normal(0, spec.radius_jitter_sd)
        r2 *= 1 + rng.normal(0, spec.radius_jitter_sd)
    sign = 1 if rng.random() < 0.5 else -1
    d1 = _rot(direction, sign * total * w1)
    d2 = _rot(direction, -sign * total * (1 - w1))
    if kind == "S":
        seg.children = [
            _grow(name + ".0", seg.end, d1, r1, level + 1, depth, prog, rng, spec),
            _grow(name + ".1", seg.end, d2, r2, level + 1, depth, prog, rng, spec),
        ]
    else:
        seg.children = [
            _grow(name + ".0", seg.end, d1, r1, level + 1, depth, prog, rng, spec),
            _grow(name + ".1", seg.end, d2, r2, depth, depth, prog, rng, spec),
        ]
    return seg


def _walk(seg):
    yield seg
    for c in seg.children:
        yield from _walk(c)


def _order(seg):
    seg.order = strahler_order([_order(c) for c in seg.children])
    return seg.order


def build_trees(spec):
    """Scripted segment trees: {"Artery": [(TrunkSpec, root Segment)], "Vein": [...]}."""
    _validate(spec)
    rng = np.random.default_rng(spec.seed)
    cx, cy = spec.disc_center
    R = spec.disc_diameter / 2
    out = {}
    for system, trunks in (("Artery", spec.artery), ("Vein", spec.vein)):
        trees = []
        for t in trunks:
            radial = np.array([math.cos(math.radians(t.polar_deg)), -math.sin(math.radians(t.polar_deg))])
            start = np.array([cx, cy]) + radial * t.start_frac * R
            direction = _rot(radial, t.elevation_deg)
            root = _grow(t.name, start, direction, t.root_radius, 0, t.program.depth, t.program, rng, spec)
            _order(root)
            trees.append((t, root))
        out[system] = trees
    return out


def rasterize_segment(mask, start, end, radius):
    """Set pixels whose centres lie within ``radius`` of the segment (round caps)."""
    h, w = mask.shape
    x0 = max(0, int(math.floor(min(start[0], end[0]) - radius)))
    x1 = min(w - 1, int(math.ceil(max(start[0], end[0]) + radius)))
    y0 = max(0, int(math.floor(min(start[1], end[1]) - radius)))
    y1 = min(h - 1, int(math.ceil(max(start[1], end[1]) + radius)))
    if x1 < x0 or y1 < y0:
        return
    yy, xx = np.mgrid[y0:y1 + 1, x0:x1 + 1]
    d = np.asarray(end, float) - np.asarray(start, float)
    L2 = float(d @ d)
    if L2 == 0:
        t = np.zeros_like(xx, dtype=float)
    else:
        t = np.clip(((xx - start[0]) * d[0] + (yy - start[1]) * d[1]) / L2, 0.0, 1.0)
    dist = np.hypot(xx - (start[0] + t * d[0]), yy - (start[1] + t * d[1]))
    mask[y0:y1 + 1, x0:x1 + 1] |= dist <= radius


def _check_bounds(seg, spec):
    for p in (seg.start, seg.end):
        if not (seg.radius <= p[0] <= spec.width - 1 - seg.radius and seg.radius <= p[1] <= spec.height - 1 - seg.radius):
            raise SynthSpecError(f"segment {seg.name} exceeds image bounds")


@dataclass
class GroundTruthJunction:
    system: str
    name: str  # parent segment name
    x: float
    y: float
    kind: str  # "Branching" | "Bifurcation"
    angle_deg: float
    d0: float
    d1: float
    d2: float
    coefficient: float
    orders: tuple
    in_zone: bool
    crossing: bool = False  # any overlap with the other system's dilated mask
    scripted_crossing: bool = False


@dataclass
class GroundTruth:
    id: str
    junctions: list
    orders: dict  # segment name -> scripted Strahler order
    ma_points: dict  # system -> [superior (x, y), inferior (x, y)]
    expected_ma: dict  # system -> degrees or None

    def to_json(self):
        return {
            "id": self.id,
            "junctions": [asdict(j) for j in self.junctions],
            "orders": self.orders,
            "ma_points": {k: [list(p) for p in v] for k, v in self.ma_points.items()},
            "expected_ma": self.expected_ma,
        }

    @classmethod
    def from_json(cls, d):
        js = []
        for j in d["junctions"]:
            j = dict(j)
            j["orders"] = tuple(j["orders"])
            js.append(GroundTruthJunction(**j))
        return cls(d["id"], js, d["orders"], {k: [tuple(p) for p in v] for k, v in d["ma_points"].items()},
                   d["expected_ma"])


def _max_order_end(root):
    top = root.order
    seg = root
    while True:
        nxt = [c for c in seg.children if c.order == top]
        if not nxt:
            return seg.end
        seg = max(nxt, key=lambda c: c.radius)


def _angle_at(center, p, q):
    u = np.asarray(p, float) - center
    v = np.asarray(q, float) - center
    c = float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def generate(spec, image_id="synth"):
    """Rasterise a spec. Returns (LabeledFundus, GroundTruth). Deterministic per seed."""
    trees = build_trees(spec)
    masks = {s: np.zeros((spec.height, spec.width), dtype=bool) for s in ("Artery", "Vein")}
    for system, items in trees.items():
        for _, root in items:
            for seg in _walk(root):
                _check_bounds(seg, spec)
                rasterize_segment(masks[system], seg.start, seg.end, seg.radius)

    disc = spec.disc
    zone = MeasurementZone(disc)
    junction_lists = {}
    for system, items in trees.items():
        for t, root in items:
            junction_lists[(system, t.name)] = [s for s in _walk(root) if s.children]
    scripted = set()
    for c in spec.crossings:
        host = "Vein" if c.system.lower().startswith("a") else "Artery"
        own = "Artery" if host == "Vein" else "Vein"
        segs = junction_lists.get((host, c.trunk))
        if segs is None or not 0 <= c.junction < len(segs):
            raise SynthSpecError(f"crossing: no junction {c.junction} on trunk {c.trunk}")
        seg = segs[c.junction]
        scripted.add((host, seg.name))
        d = _rot(seg.direction, c.angle_deg)
        a, b = seg.end - d * c.length / 2, seg.end + d * c.length / 2
        cross = Segment(f"X{own[0]}.{c.trunk}.{c.junction}", a, b, c.radius)
        _check_bounds(cross, spec)
        rasterize_segment(masks[own], a, b, c.radius)

    dilated = {s: _dilate(m, 2) for s, m in masks.items()}
    junctions, orders, ma_points, expected = [], {}, {}, {}
    cx, cy = disc.center
    for system, items in trees.items():
        other = "Vein" if system == "Artery" else "Artery"
        for t, root in items:
            for seg in _walk(root):
                orders[seg.name] = seg.order
                if not seg.children:
                    continue
                c1, c2 = sorted(seg.children, key=lambda s: -s.radius)[:2]
                kind = "Bifurcation" if c1.order == c2.order else "Branching"
                d0, d1, d2 = 2 * seg.radius, 2 * c1.radius, 2 * c2.radius
                x, y = float(seg.end[0]), float(seg.end[1])
                xi, yi = int(round(x)), int(round(y))
                junctions.append(GroundTruthJunction(
                    system, seg.name, x, y, kind,
                    float(np.degrees(np.arccos(np.clip(c1.direction @ c2.direction, -1, 1)))),
                    d0, d1, d2, coefficient(d0, d1, d2), (c1.order, c2.order),
                    in_zone((x, y), zone), bool(dilated[other][yi, xi]) or (system, seg.name) in scripted,
                    (system, seg.name) in scripted,
                ))
        sup = [(t, r) for t, r in items if r.start[1] < cy]
        inf = [(t, r) for t, r in items if r.start[1] >= cy]
        if sup and inf:
            ps = _max_order_end(max(sup, key=lambda tr: tr[0].root_radius)[1])
            pi = _max_order_end(max(inf, key=lambda tr: tr[0].root_radius)[1])
            ma_points[system] = [tuple(map(float, ps)), tuple(map(float, pi))]
            expected[system] = _angle_at(np.array([cx, cy]), ps, pi)
        else:
            ma_points[system] = []
            expected[system] = None

    record = LabeledFundus(image_id, "Right", 0.0, None, masks["Artery"], masks["Vein"], disc)
    return record, GroundTruth(image_id, junctions, orders, ma_points, expected)


def _point_segment(p, a, b):
    d = b - a
    L2 = float(d @ d)
    t = 0.0 if L2 == 0 else min(1.0, max(0.0, float((p - a) @ d) / L2))
    return float(np.linalg.norm(p - (a + t * d)))


def _segments_cross(a, b, c, d):
    def orient(p, q, r):
        return np.sign((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))
    return orient(a, b, c) * orient(a, b, d) < 0 and orient(c, d, a) * orient(c, d, b) < 0


def segment_distance(a, b, c, d):
    if _segments_cross(a, b, c, d):
        return 0.0
    return min(_point_segment(a, c, d), _point_segment(b, c, d), _point_segment(c, a, b), _point_segment(d, a, b))


def collisions(spec, margin=3.0):
    """Pairs of same-system segments that touch without sharing a junction."""
    out = []
    for system, items in build_trees(spec).items():
        segs = [seg for _, root in items for seg in _walk(root)]
        for i in range(len(segs)):
            for j in range(i + 1, len(segs)):
                a, b = segs[i], segs[j]
                shared = any(np.allclose(p, q) for p in (a.start, a.end) for q in (b.start, b.end))
                if shared:
                    continue
                if segment_distance(a.start, a.end, b.start, b.end) < a.radius + b.radius + margin:
                    out.append((a.name, b.name))
    return out


# ---------------------------------------------------------------- defaults

def default_spec(seed=0, jitter=True, max_tries=50):
    """A fundus-like layout: temporal arcades plus smaller nasal vessels per system.

    Layouts whose same-system vessels touch are redrawn, so every scripted
    junction is a real branch point.
    """
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        spec = _draw_spec(rng, seed, jitter)
        if not collisions(spec):
            return spec
    raise SynthSpecError(f"no collision-free layout for seed {seed}")


def _draw_spec(rng, seed, jitter):

    def prog(pattern, depth=3):
        return BranchProgram(
            depth=depth,
            angles=[float(rng.uniform(55, 80)), float(rng.uniform(50, 75)), float(rng.uniform(45, 70))],
            lengths=[float(rng.uniform(75, 95)), float(rng.uniform(55, 70)), float(rng.uniform(45, 55)),
                     float(rng.uniform(40, 50))],
            pattern=pattern,
        )

    def trunk(name, polar, radius, pattern, depth=3):
        return TrunkSpec(name, polar + float(rng.normal(0, 3)), radius, float(rng.normal(0, 4)), prog(pattern, depth))

    patterns = ["S", "M", "MS", "SM"]
    artery = [
        trunk("A_sup", 135, 6.0, patterns[rng.integers(4)]),
        trunk("A_inf", 225, 6.0, patterns[rng.integers(4)]),
        trunk("A_nas", 20, 4.5, "M", 2),
    ]
    vein = [
        trunk("V_sup", 100, 7.0, patterns[rng.integers(4)]),
        trunk("V_inf", 260, 7.0, patterns[rng.integers(4)]),
        trunk("V_nas", 340, 5.0, "M", 2),
    ]
    return SynthSpec(artery=artery, vein=vein, angle_jitter_sd=3.0 if jitter else 0.0,
                     radius_jitter_sd=0.05 if jitter else 0.0, seed=seed)


# ---------------------------------------------------------------- cohorts

SER_RANGES = {
    RefractionGroup.Normal: (-0.49, 1.0),
    RefractionGroup.LowMyopia: (-2.99, -0.5),
    RefractionGroup.ModerateMyopia: (-5.99, -3.0),
    RefractionGroup.HighMyopia: (-9.0, -6.0),
}

ANGLE_PARAMS = ("ma_deg", "ba_deg", "bea_deg")


def apply_effects(spec, offsets):
    """Shift scripted angles. ``offsets`` maps (system, parameter) -> degrees."""
    spec = replace(spec, artery=[replace(t, program=replace(t.program)) for t in spec.artery],
                   vein=[replace(t, program=replace(t.program)) for t in spec.vein])
    cx, cy = spec.disc_center
    for system, trunks in (("Artery", spec.artery), ("Vein", spec.vein)):
        ma = offsets.get((system, "ma_deg"), 0.0)
        if ma:
            sup = [t for t in trunks if math.sin(math.radians(t.polar_deg)) > 0]
            inf = [t for t in trunks if math.sin(math.radians(t.polar_deg)) <= 0]
            if sup and inf:
                ts = max(sup, key=lambda t: t.root_radius)
                ti = max(inf, key=lambda t: t.root_radius)
                gap = (ts.polar_deg - ti.polar_deg) % 360
                sign = 1 if gap <= 180 else -1
                ts.polar_deg += sign * ma / 2
                ti.polar_deg -= sign * ma / 2
        for key, kind in (("ba_deg", "M"), ("bea_deg", "S")):
            off = offsets.get((system, key), 0.0)
            if not off:
                continue
            for t in trunks:
                p = t.program
                p.angles = [a + off if p.pattern[min(i, len(p.pattern) - 1)] == kind else a
                            for i, a in enumerate(p.angles)]
    return spec


def _group_key(g):
    return g if isinstance(g, RefractionGroup) else RefractionGroup(g)


def normalize_effects(effects):
    """{group: {(system, param): offset}} from nested dict or string-keyed forms."""
    out = {}
    for g, eff in (effects or {}).items():
        g = _group_key(g)
        flat = {}
        for k, v in eff.items():
            if isinstance(k, tuple):
                flat[k] = float(v)
            elif isinstance(v, dict):
                for p, off in v.items():
                    flat[(k, p)] = float(off)
            else:
                system, p = k.split(".", 1)
                flat[(system, p)] = float(v)
        out[g] = flat
    return out


def _write_image(spec, out, image_id, ser=0.0, age=None, eye="R"):
    rec, gt = generate(spec, image_id)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "truth").mkdir(exist_ok=True)
    rel = {k: f"images/{image_id}_{k}.png" for k in ("artery", "vein")}
    write_mask(rec.artery_mask, out / rel["artery"])
    write_mask(rec.vein_mask, out / rel["vein"])
    write_disc(rec.disc, out / f"images/{image_id}_disc.json")
    with open(out / f"truth/{image_id}.json", "w") as fh:
        json.dump(gt.to_json(), fh, indent=1, sort_keys=True)
    row = {"id": image_id, "eye": eye, "ser_diopters": repr(ser), "age_years": "" if age is None else repr(age),
           "artery_mask": rel["artery"], "vein_mask": rel["vein"], "disc_json": f"images/{image_id}_disc.json"}
    return gt, row


def write_single(spec, out_dir, image_id="synth"):
    """Generate one image from ``spec`` into ``out_dir`` with a one-row manifest."""
    out = Path(out_dir)
    _, row = _write_image(spec, out, image_id)
    write_manifest([row], out / "manifest.csv")
    with open(out / "spec.json", "w") as fh:
        json.dump(spec.to_json(), fh, indent=1, sort_keys=True)
    return out / "manifest.csv"


def generate_cohort(out_dir, effects=None, n_per_group=10, seed=0, base=default_spec):
    """Write images, disc sidecars, ground truth, manifest and effect ledger.

    Returns the manifest path.
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "truth").mkdir(exist_ok=True)
    effects = normalize_effects(effects)
    ss = np.random.SeedSequence(seed)
    rows = []
    ledger = {"seed": seed, "n_per_group": n_per_group, "groups": {}}
    for gi, group in enumerate(RefractionGroup):
        child = ss.spawn(1)[0]
        rng = np.random.default_rng(child)
        offsets = effects.get(group, {})
        realized = {"Artery": [], "Vein": []}
        for i in range(n_per_group):
            image_id = f"{group.value}_{i:04d}"
            img_seed = int(rng.integers(2 ** 31))
            spec = apply_effects(base(img_seed), offsets)
            ser = round(float(rng.uniform(*SER_RANGES[group])), 2)
            age = round(float(rng.uniform(6, 16)), 1)
            gt, row = _write_image(spec, out, image_id, ser, age, "R" if i % 2 == 0 else "L")
            rows.append(row)
            for s in realized:
                realized[s].append(gt.expected_ma.get(s))
        ledger["groups"][group.value] = {
            "offsets": {f"{s}.{p}": v for (s, p), v in sorted(offsets.items())},
            "scripted_mean_ma": {s: (float(np.mean([v for v in vals if v is not None])) if any(v is not None for v in vals) else None)
                                 for s, vals in realized.items()},
        }
    write_manifest(rows, out / "manifest.csv")
    with open(out / "effects.json", "w") as fh:
        json.dump(ledger, fh, indent=1, sort_keys=True)
    return out / "manifest.csv"


# per-image parameter means used when simulating cohorts at the table level
BASE_MEANS = {
    ("Artery", "ma_deg"): 85.0, ("Artery", "ba_deg"): 35.0, ("Artery", "bc_mean"): 1.4,
    ("Artery", "bea_deg"): 34.5, ("Artery", "bec_mean"): 0.8,
    ("Vein", "ma_deg"): 80.0, ("Vein", "ba_deg"): 36.0, ("Vein", "bc_mean"): 1.4,
    ("Vein", "bea_deg"): 34.5, ("Vein", "bec_mean"): 0.7,
}
BASE_SD = {"ma_deg": 3.0, "ba_deg": 3.0, "bea_deg": 3.0, "bc_mean": 0.1, "bec_mean": 0.1}


def simulate_cohort_metrics(effects=None, n_per_group=50, seed=0, noise_sd=None):
    """Per-image metric rows drawn around scripted means, for table-level simulation.

    Returns (rows, groups) where rows follow the flattened metrics CSV layout and
    groups maps image id -> RefractionGroup.
    """
    effects = normalize_effects(effects)
    sds = dict(BASE_SD, **(noise_sd or {}))
    rng = np.random.default_rng(seed)
    rows, groups = [], {}
    col = {"ma_deg": "ma_deg", "ba_deg": "ba_deg_mean", "bea_deg": "bea_deg_mean", "bc_mean": "bc_mean",
           "bec_mean": "bec_mean"}
    for group in RefractionGroup:
        offsets = effects.get(group, {})
        for i in range(n_per_group):
            image_id = f"{group.value}_{i:04d}"
            groups[image_id] = group
            for system in ("Artery", "Vein"):
                row = {"id": image_id, "system": system, "status": "ok"}
                for p, c in col.items():
                    mu = BASE_MEANS[(system, p)] + offsets.get((system, p), 0.0)
                    row[c] = float(rng.normal(mu, sds[p]))
                rows.append(row)
    return rows, groups


# ---------------------------------------------------------------- scoring

@dataclass
class ScoreReport:
    matched: list  # (gt junction, measured junction, angle error, coefficient relative error)
    precision: float | None
    recall: float | None
    ma_error: float | None
    n_truth: int
    n_measured: int

    @property
    def angle_errors(self):
        return [m[2] for m in self.matched]

    @property
    def coefficient_errors(self):
        return [m[3] for m in self.matched]


def score_pipeline(gt, measured, radius=5.0):
    """Match measured junctions to scripted ones (nearest within ``radius`` px)."""
    system = measured.system
    truth = [j for j in gt.junctions if j.system == system and j.in_zone and not j.crossing]
    meas = list(measured.junctions)
    pairs = []
    for ti, t in enumerate(truth):
        for mi, m in enumerate(meas):
            d = math.hypot(t.x - m.x, t.y - m.y)
            if d <= radius:
                pairs.append((d, ti, mi))
    pairs.sort()
    used_t, used_m, matched = set(), set(), []
    for d, ti, mi in pairs:
        if ti in used_t or mi in used_m:
            continue
        used_t.add(ti)
        used_m.add(mi)
        t, m = truth[ti], meas[mi]
        matched.append((t, m, abs(m.angle_deg - t.angle_deg), abs(m.coefficient / t.coefficient - 1)))
    precision = len(matched) / len(meas) if meas else None
    recall = len(matched) / len(truth) if truth else None
    exp = gt.expected_ma.get(system)
    ma_err = abs(measured.ma_deg - exp) if (exp is not None and measured.ma_deg is not None) else None
    return ScoreReport(matched, precision, recall, ma_err, len(truth), len(meas))
