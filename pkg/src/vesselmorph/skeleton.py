"""Mask cleanup, thinning, and extraction of a centerline graph with radii."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage as ndi
from scipy.spatial import cKDTree

from ._neighborhood import DEGREE, neighborhood_codes
from .kernels import thin_padded

EIGHT = np.ones((3, 3), dtype=bool)
FOUR = ndi.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class SkeletonConfig:
    min_component_px: int = 20
    max_hole_px: int = 10
    junction_merge_px: int = 2
    min_junction_edge_px: float = 3.0
    # terminal edges shorter than max(min_spur_px, spur_radius_factor * local radius) are thinning spurs
    min_spur_px: float = 6.0
    spur_radius_factor: float = 1.5
    min_self_loop_px: float = 10.0
    radius_offset: float = 0.0
    backend: str | None = None


@dataclass
class Skeleton:
    image: np.ndarray  # bool, source dims

    @property
    def source_dims(self):
        return self.image.shape

    @property
    def pixels(self):
        rows, cols = np.nonzero(self.image)
        return {(int(c), int(r)) for r, c in zip(rows, cols)}

    def __len__(self):
        return int(self.image.sum())


@dataclass
class Node:
    id: int
    position: tuple  # (x, y), float
    kind: str  # "Endpoint" | "Junction"
    pixels: list = field(default_factory=list, repr=False)  # (row, col)


@dataclass
class Edge:
    id: int
    a: int
    b: int
    polyline: np.ndarray  # (n, 2) int, columns (x, y), ordered from a to b
    radii: np.ndarray  # (n,) float, pixels

    @property
    def length_px(self):
        return polyline_length(self.polyline)

    @property
    def mean_radius(self):
        return float(np.mean(self.radii))

    def other(self, node_id):
        return self.b if node_id == self.a else self.a


@dataclass
class SkeletonGraph:
    nodes: dict  # id -> Node
    edges: dict  # id -> Edge
    shape: tuple = (0, 0)

    def degree(self, node_id):
        return sum((e.a == node_id) + (e.b == node_id) for e in self.edges.values())

    def incident(self, node_id):
        return [e for e in self.edges.values() if node_id in (e.a, e.b)]

    def adjacency(self):
        adj = {n: [] for n in self.nodes}
        for e in self.edges.values():
            adj[e.a].append(e.id)
            if e.b != e.a:
                adj[e.b].append(e.id)
        return adj

    def to_json(self):
        return {
            "nodes": [
                {"id": n.id, "x": round(n.position[0], 3), "y": round(n.position[1], 3), "kind": n.kind}
                for n in self.nodes.values()
            ],
            "edges": [
                {
                    "id": e.id,
                    "a": e.a,
                    "b": e.b,
                    "length_px": round(e.length_px, 3),
                    "mean_radius_px": round(e.mean_radius, 3),
                }
                for e in self.edges.values()
            ],
        }


def polyline_length(poly):
    if len(poly) < 2:
        return 0.0
    steps = np.diff(np.asarray(poly, dtype=float), axis=0)
    return float(np.hypot(steps[:, 0], steps[:, 1]).sum())


def bbox_slices(mask, pad=0):
    """Slices of the foreground bounding box grown by ``pad`` (clipped), or None if empty."""
    rows = np.flatnonzero(mask.any(axis=1))
    if not len(rows):
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    h, w = mask.shape
    return (slice(max(0, rows[0] - pad), min(h, rows[-1] + pad + 1)),
            slice(max(0, cols[0] - pad), min(w, cols[-1] + pad + 1)))


def preprocess_mask(mask, config=SkeletonConfig()):
    """Drop specks and fill pinholes. Returns a bool array."""
    full = np.asarray(mask) != 0
    box = bbox_slices(full, 1)
    if box is None:
        return full.copy()
    mask = full[box]
    labels, n = ndi.label(mask, EIGHT)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    keep = sizes >= config.min_component_px
    keep[0] = False
    out = keep[labels]
    # holes are background 4-components that do not reach the border
    bg, nb = ndi.label(np.pad(~out, 1), FOUR)
    bsizes = np.bincount(bg.ravel(), minlength=nb + 1)
    fill = bsizes < config.max_hole_px
    fill[0] = False
    fill[bg[0, 0]] = False
    result = np.zeros_like(full)
    result[box] = out | fill[bg[1:-1, 1:-1]]
    return result


def thin(mask, backend=None):
    """One-pixel-wide 8-connected skeleton of a binary mask."""
    img = np.pad((np.asarray(mask) != 0).astype(np.uint8), 1)
    thin_padded(img, backend)
    return Skeleton(img[1:-1, 1:-1].astype(bool))


def _neighbors(img, r, c):
    h, w = img.shape
    out = []
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and img[rr, cc]:
                out.append((rr, cc))
    return out


def _bridge(p, q):
    """Pixels strictly between two (row, col) points on a digital straight line."""
    n = max(abs(q[0] - p[0]), abs(q[1] - p[1]))
    return [
        (int(round(p[0] + (q[0] - p[0]) * t / n)), int(round(p[1] + (q[1] - p[1]) * t / n)))
        for t in range(1, n)
    ]


class _Builder:
    """Mutable graph used while cleaning up the raw traced skeleton."""

    def __init__(self):
        self.nodes = {}  # id -> list of (row, col) pixels
        self.edges = {}  # id -> [a, b, list of (row, col)]
        self._inc = {}  # node id -> set of incident edge ids
        self._next_node = 0
        self._next_edge = 0

    def add_node(self, pixels):
        nid = self._next_node
        self._next_node += 1
        self.nodes[nid] = list(pixels)
        self._inc[nid] = set()
        return nid

    def add_edge(self, a, b, path):
        eid = self._next_edge
        self._next_edge += 1
        self.edges[eid] = [a, b, list(path)]
        self._inc[a].add(eid)
        self._inc[b].add(eid)
        return eid

    def remove_edge(self, eid):
        a, b, _ = self.edges.pop(eid)
        self._inc[a].discard(eid)
        self._inc[b].discard(eid)

    def remove_node(self, nid):
        for eid in list(self._inc[nid]):
            self.remove_edge(eid)
        del self.nodes[nid], self._inc[nid]

    def incident(self, nid):
        return sorted(self._inc[nid])

    def degree(self, nid):
        return sum((self.edges[e][0] == nid) + (self.edges[e][1] == nid) for e in self._inc[nid])

    def path_from(self, eid, nid):
        a, b, path = self.edges[eid]
        return path if a == nid else path[::-1]

    def splice(self, nid):
        """Merge the two edges meeting at a degree-2 node into one."""
        e1, e2 = self.incident(nid)
        p1 = self.path_from(e1, nid)[::-1]  # ends at nid
        p2 = self.path_from(e2, nid)
        x = self.edges[e1][0] if self.edges[e1][1] == nid else self.edges[e1][1]
        y = self.edges[e2][1] if self.edges[e2][0] == nid else self.edges[e2][0]
        if p1[-1] == p2[0]:
            path = p1 + p2[1:]
        else:
            path = p1 + _bridge(p1[-1], p2[0]) + p2
        self.remove_node(nid)
        self.add_edge(x, y, path)

    def merge_nodes(self, keep, drop):
        self.nodes[keep] = self.nodes[keep] + self.nodes[drop]
        for eid in self._inc[drop]:
            e = self.edges[eid]
            if e[0] == drop:
                e[0] = keep
            if e[1] == drop:
                e[1] = keep
            self._inc[keep].add(eid)
        del self.nodes[drop], self._inc[drop]


def _trace(skel):
    """Trace node pixels and maximal pixel chains into a raw multigraph."""
    box = bbox_slices(skel, 1)
    b = _trace_box(skel[box].astype(np.uint8))
    r0, c0 = box[0].start, box[1].start
    if r0 or c0:
        for nid, px in b.nodes.items():
            b.nodes[nid] = [(r + r0, c + c0) for r, c in px]
        for e in b.edges.values():
            e[2] = [(r + r0, c + c0) for r, c in e[2]]
    return b


def _trace_box(img):
    deg = np.where(img == 1, DEGREE[neighborhood_codes(img)], 0)
    b = _Builder()
    owner = {}
    ends = np.argwhere(deg == 1)
    for r, c in ends.tolist():
        owner[(r, c)] = b.add_node([(r, c)])
    junc = np.argwhere(deg >= 3)
    if len(junc):
        pairs = cKDTree(junc).query_pairs(r=2.0, p=np.inf, output_type="ndarray")
        parent = list(range(len(junc)))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for i, j in pairs.tolist():
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
        groups = {}
        for i in range(len(junc)):
            groups.setdefault(find(i), []).append(tuple(junc[i].tolist()))
        for root in sorted(groups):
            nid = b.add_node(groups[root])
            for p in groups[root]:
                owner[p] = nid

    visited = np.zeros(img.shape, dtype=bool)
    seen_links = set()
    for p in sorted(owner):
        for q in _neighbors(img, *p):
            if q in owner:
                if owner[q] == owner[p]:
                    continue
                link = frozenset((p, q))
                if link not in seen_links:
                    seen_links.add(link)
                    b.add_edge(owner[p], owner[q], [p, q])
                continue
            if visited[q]:
                continue
            path = [p, q]
            visited[q] = True
            prev, cur = p, q
            while cur not in owner:
                nxt = [n for n in _neighbors(img, *cur) if n != prev and not (n not in owner and visited[n])]
                # prefer stepping onto a node pixel when one is adjacent
                nodes_next = [n for n in nxt if n in owner and n != p]
                if nodes_next:
                    nxt = nodes_next
                elif not nxt:
                    nxt = [n for n in _neighbors(img, *cur) if n in owner]
                if not nxt:
                    break
                prev, cur = cur, nxt[0]
                path.append(cur)
                if cur not in owner:
                    visited[cur] = True
            if cur in owner:
                b.add_edge(owner[p], owner[cur], path)
    return b


def _is_junction(b, nid):
    return b.degree(nid) >= 3


def _cleanup(b, radius_at, config):
    changed = True
    while changed:
        changed = False
        # short self-loops are junction-cluster artefacts
        for eid, (a, bb, path) in list(b.edges.items()):
            if a == bb and polyline_length(path) < config.min_self_loop_px:
                b.remove_edge(eid)
                changed = True
        # contract short junction-to-junction links
        for eid in sorted(b.edges):
            if eid not in b.edges:
                continue
            a, bb, path = b.edges[eid]
            if a != bb and _is_junction(b, a) and _is_junction(b, bb) and polyline_length(path) < config.min_junction_edge_px:
                b.remove_edge(eid)
                b.merge_nodes(min(a, bb), max(a, bb))
                changed = True
        # prune short spurs, then re-normalise
        spurs = []
        for eid, (a, bb, path) in b.edges.items():
            if a == bb:
                continue
            da, db = b.degree(a), b.degree(bb)
            if (da == 1) == (db == 1):
                continue
            j = a if db == 1 else bb
            if b.degree(j) < 3:
                continue
            jp = path[0] if j == a else path[-1]
            limit = max(config.min_spur_px, config.spur_radius_factor * radius_at(jp))
            length = polyline_length(path)
            if length < limit:
                spurs.append((length, eid, a if da == 1 else bb, j))
        # shortest first, at most one per junction per pass
        touched = set()
        for _, eid, end, j in sorted(spurs):
            if j in touched:
                continue
            touched.add(j)
            b.remove_node(end)
            changed = True
        for nid in sorted(b.nodes):
            if nid not in b.nodes:
                continue
            d = b.degree(nid)
            if d == 0:
                b.remove_node(nid)
                changed = True
            elif d == 2:
                inc = b.incident(nid)
                if len(inc) == 2:
                    b.splice(nid)
                    changed = True
                else:
                    # isolated closed loop hanging on a single node
                    b.remove_node(nid)
                    changed = True


def extract_graph(skel, mask, config=SkeletonConfig()):
    """Centerline graph of a skeleton, with radii sampled from the mask's EDT."""
    image = skel.image if isinstance(skel, Skeleton) else np.asarray(skel, dtype=bool)
    mask = np.asarray(mask) != 0
    if not image.any():
        return SkeletonGraph({}, {}, image.shape)
    edt = np.zeros(mask.shape)
    box = bbox_slices(mask, 1)
    if box is not None:
        edt[box] = ndi.distance_transform_edt(mask[box])

    def radius_at(p):
        return max(0.5, float(edt[p[0], p[1]]) - config.radius_offset)

    b = _trace(image)
    _cleanup(b, radius_at, config)

    # renumber deterministically by position
    def node_key(nid):
        px = np.asarray(b.nodes[nid], dtype=float)
        return (float(px[:, 0].mean()), float(px[:, 1].mean()))

    order = sorted(b.nodes, key=node_key)
    remap = {old: new for new, old in enumerate(order)}
    nodes = {}
    for old in order:
        px = np.asarray(b.nodes[old], dtype=float)
        kind = "Endpoint" if b.degree(old) == 1 else "Junction"
        nodes[remap[old]] = Node(
            remap[old], (float(px[:, 1].mean()), float(px[:, 0].mean())), kind, list(b.nodes[old])
        )
    raw = []
    for a, bb, path in b.edges.values():
        a, bb = remap[a], remap[bb]
        if (a, path[0]) > (bb, path[-1]):
            a, bb, path = bb, a, path[::-1]
        raw.append((a, bb, tuple(path[0]), tuple(path[-1]), len(path), path))
    raw.sort(key=lambda t: t[:5])
    edges = {}
    for eid, (a, bb, _, _, _, path) in enumerate(raw):
        rc = np.asarray(path, dtype=np.int64)
        radii = np.maximum(0.5, edt[rc[:, 0], rc[:, 1]] - config.radius_offset)
        edges[eid] = Edge(eid, a, bb, rc[:, ::-1].copy(), radii.astype(float))
    return SkeletonGraph(nodes, edges, image.shape)


def skeleton_png(skel, path):
    from PIL import Image

    Image.fromarray((skel.image.astype(np.uint8) * 255)).save(path)


def graph_json(graph, path):
    with open(path, "w") as fh:
        json.dump(graph.to_json(), fh, indent=1)

