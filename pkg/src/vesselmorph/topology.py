"""Rooting skeleton graphs at the optic disc, Strahler ordering and junction classes."""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage as ndi

from .geometry import DirectionError, angle_between, branch_pixels, fit_direction, line_intersection
from .skeleton import bbox_slices


class NoRootedVessels(RuntimeError):
    """No vessel component reaches the optic disc neighbourhood."""


class JunctionKind(str, enum.Enum):
    Branching = "Branching"
    Bifurcation = "Bifurcation"
    CrossingExcluded = "CrossingExcluded"


@dataclass(frozen=True)
class RootAttachment:
    component: int
    position: tuple  # (x, y) of the root pixel
    node: int | None  # existing node at the root pixel
    edge: int | None = None  # otherwise: edge to split ...
    index: int | None = None  # ... at this polyline index


@dataclass
class TreeEdge:
    id: int
    parent: int  # node id, proximal
    child: int  # node id, distal
    polyline: np.ndarray  # (n, 2) x, y; ordered parent -> child
    radii: np.ndarray
    order: int = 0

    @property
    def length_px(self):
        if len(self.polyline) < 2:
            return 0.0
        d = np.diff(self.polyline.astype(float), axis=0)
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    @property
    def mean_radius(self):
        return float(np.mean(self.radii))


@dataclass
class VesselTree:
    system: str
    root: int
    positions: dict  # node id -> (x, y)
    edges: dict  # edge id -> TreeEdge
    children: dict = field(default_factory=dict)  # node id -> [edge ids]
    parent_edge: dict = field(default_factory=dict)  # node id -> edge id
    deleted_edges: int = 0

    def __post_init__(self):
        self._index()

    def _index(self):
        self.children = {n: [] for n in self.positions}
        self.parent_edge = {}
        for e in sorted(self.edges.values(), key=lambda e: e.id):
            self.children[e.parent].append(e.id)
            self.parent_edge[e.child] = e.id

    @property
    def root_edges(self):
        return [self.edges[i] for i in self.children[self.root]]

    @property
    def root_diameter(self):
        roots = self.root_edges
        if not roots:
            return 0.0
        return max(2.0 * float(np.median(e.radii)) for e in roots)

    @property
    def max_order(self):
        return max((e.order for e in self.edges.values()), default=0)

    def junctions(self):
        """Non-root nodes with two or more daughters."""
        return [n for n, ch in self.children.items() if n != self.root and len(ch) >= 2]

    def postorder_edges(self):
        out = []
        stack = [(eid, False) for eid in reversed(self.children[self.root])]
        while stack:
            eid, done = stack.pop()
            if done:
                out.append(eid)
                continue
            stack.append((eid, True))
            for c in reversed(self.children[self.edges[eid].child]):
                stack.append((c, False))
        return out

    def to_json(self, classes=()):
        return {
            "system": self.system,
            "roots": [self.root],
            "edges": [
                {
                    "id": e.id,
                    "parent": self.parent_edge.get(e.parent),
                    "order": e.order,
                    "mean_radius_px": round(e.mean_radius, 3),
                    "length_px": round(e.length_px, 3),
                }
                for e in sorted(self.edges.values(), key=lambda e: e.id)
            ],
            "junctions": [{"id": c.node, "class": c.kind.value} for c in classes if not c.secondary],
        }


def _components(graph):
    parent = {n: n for n in graph.nodes}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in graph.edges.values():
        ra, rb = find(e.a), find(e.b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    comps = {}
    for n in sorted(graph.nodes):
        comps.setdefault(find(n), []).append(n)
    return list(comps.values())


def find_roots(graph, disc, reach=1.5):
    """One root per component that comes within ``reach`` disc radii of the disc centre.

    The root is the component pixel closest to the disc-boundary circle.
    """
    cx, cy = disc.center
    radius = disc.radius
    roots = []
    for ci, nodes in enumerate(_components(graph)):
        nodeset = set(nodes)
        edges = [e for e in graph.edges.values() if e.a in nodeset]
        if not edges:
            continue
        best = None
        nearest = math.inf
        for e in sorted(edges, key=lambda e: e.id):
            pts = e.polyline.astype(float)
            dist = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)
            nearest = min(nearest, float(dist.min()))
            gap = np.abs(dist - radius)
            i = int(np.argmin(gap))
            key = (float(gap[i]), -float(e.radii[i]))
            if best is None or key < best[0]:
                best = (key, e, i)
        if nearest > reach * radius:
            continue
        _, e, i = best
        pos = (int(e.polyline[i, 0]), int(e.polyline[i, 1]))
        if i == 0:
            roots.append(RootAttachment(ci, pos, e.a))
        elif i == len(e.polyline) - 1:
            roots.append(RootAttachment(ci, pos, e.b))
        else:
            roots.append(RootAttachment(ci, pos, None, e.id, i))
    if not roots:
        raise NoRootedVessels("no vessel component reaches the optic disc")
    return roots


def orient_and_break_cycles(graph, roots, system="Artery"):
    """Forest of disc-rooted trees; loops are cut at their thinnest edge."""
    positions = {n.id: tuple(n.position) for n in graph.nodes.values()}
    edges = {e.id: (e.a, e.b, e.polyline, e.radii) for e in graph.edges.values()}
    next_node = max(positions, default=-1) + 1
    next_edge = max(edges, default=-1) + 1
    root_nodes = []
    for r in roots:
        if r.node is not None:
            root_nodes.append(r.node)
            continue
        a, b, poly, radii = edges.pop(r.edge)
        nid = next_node
        next_node += 1
        positions[nid] = (float(poly[r.index, 0]), float(poly[r.index, 1]))
        edges[next_edge] = (a, nid, poly[: r.index + 1], radii[: r.index + 1])
        edges[next_edge + 1] = (nid, b, poly[r.index:], radii[r.index:])
        next_edge += 2
        root_nodes.append(nid)

    adj = {n: [] for n in positions}
    for eid in sorted(edges):
        a, b, _, _ = edges[eid]
        adj[a].append(eid)
        if b != a:
            adj[b].append(eid)

    forest = []
    for root in root_nodes:
        # component of this root
        comp, seen = [], {root}
        queue = deque([root])
        while queue:
            n = queue.popleft()
            comp.append(n)
            for eid in adj[n]:
                a, b, _, _ = edges[eid]
                m = b if a == n else a
                if m not in seen:
                    seen.add(m)
                    queue.append(m)
        comp_edges = sorted({eid for n in comp for eid in adj[n]})
        # maximum spanning tree by mean radius == deleting the thinnest edge of every cycle
        uf = {n: n for n in comp}

        def find(x):
            while uf[x] != x:
                uf[x] = uf[uf[x]]
                x = uf[x]
            return x

        kept = set()
        for eid in sorted(comp_edges, key=lambda i: (-float(np.mean(edges[i][3])), i)):
            a, b, _, _ = edges[eid]
            ra, rb = find(a), find(b)
            if ra != rb:
                uf[ra] = rb
                kept.add(eid)
        deleted = len(comp_edges) - len(kept)

        tedges = {}
        visited = {root}
        queue = deque([root])
        while queue:
            n = queue.popleft()
            for eid in adj[n]:
                if eid not in kept:
                    continue
                a, b, poly, radii = edges[eid]
                m = b if a == n else a
                if m in visited:
                    continue
                visited.add(m)
                if a != n:
                    poly, radii = poly[::-1], radii[::-1]
                tedges[eid] = TreeEdge(eid, n, m, np.ascontiguousarray(poly), np.ascontiguousarray(radii, dtype=float))
                queue.append(m)
        tree = VesselTree(system, root, {n: positions[n] for n in visited}, tedges, deleted_edges=deleted)
        forest.append(tree)
    return forest


def strahler_order(child_orders):
    """Order of a segment given the orders of its daughter segments."""
    if not child_orders:
        return 1
    s = sorted(child_orders, reverse=True)
    if len(s) >= 2 and s[0] == s[1]:
        return s[0] + 1
    return s[0]


def assign_strahler(tree):
    for eid in tree.postorder_edges():
        e = tree.edges[eid]
        e.order = strahler_order([tree.edges[c].order for c in tree.children[e.child]])
    return tree


@dataclass(frozen=True)
class JunctionClass:
    node: int
    kind: JunctionKind
    parent_edge: int
    daughters: tuple  # edge ids of the measured pair
    secondary: bool = False  # extra daughter of a 3+-way split


@dataclass(frozen=True)
class ClassifyConfig:
    crossing_dilation_px: int = 2
    collinear_tol_deg: float = 30.0
    direction_window_px: int = 10
    # the crossing test also probes the centreline meeting point, within this many parent diameters
    refine_reach: float = 1.0


def _dilate(mask, r):
    if r <= 0:
        return np.asarray(mask, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    out = np.zeros_like(mask)
    box = bbox_slices(mask, r)
    if box is not None:
        yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
        out[box] = ndi.binary_dilation(mask[box], structure=(xx ** 2 + yy ** 2) <= r * r)
    return out


def edge_diameter_raw(edge):
    return 2.0 * float(np.median(edge.radii))


def _direction_from(tree, eid, node, window):
    e = tree.edges[eid]
    poly = e.polyline if e.parent == node else e.polyline[::-1]
    return fit_direction(poly[: max(2, min(window, len(poly)))])


def fit_junction(tree, node, edge_ids, window, skip=1.0, span=2.0):
    """Fitted directions leaving ``node`` along ``edge_ids`` and the lines' meeting point.

    ``skip`` and ``span`` are in units of ``window``. The meeting point is the
    least-squares intersection of the fitted centrelines (None if degenerate).
    """
    lines = []
    for eid in edge_ids:
        e = tree.edges[eid]
        poly = e.polyline if e.parent == node else e.polyline[::-1]
        lines.append(branch_pixels(poly, window, skip * window, span * window))
    dirs = [fit_direction(px) for px in lines]
    hit = line_intersection([px.mean(axis=0) for px in lines], dirs)
    return dirs, hit


def is_crossing_pattern(directions, tol=30.0):
    """Four edge directions pairing into two near-straight through-lines."""
    if len(directions) != 4:
        return False
    pairings = (((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2)))
    for (a, b), (c, d) in pairings:
        if (angle_between(directions[a], directions[b]) >= 180 - tol
                and angle_between(directions[c], directions[d]) >= 180 - tol):
            return True
    return False


def _covered(mask, x, y):
    if mask is None:
        return False
    xi, yi = int(round(x)), int(round(y))
    return 0 <= yi < mask.shape[0] and 0 <= xi < mask.shape[1] and bool(mask[yi, xi])


def classify_junctions(tree, other_system_mask=None, config=ClassifyConfig(), dilated=None):
    """One primary class per junction, plus a secondary Branching per extra daughter."""
    if dilated is None and other_system_mask is not None:
        dilated = _dilate(other_system_mask, config.crossing_dilation_px)
    out = []
    for node in sorted(tree.junctions()):
        kids = tree.children[node]
        pe = tree.parent_edge[node]
        x, y = tree.positions[node]
        crossing = _covered(dilated, x, y)
        if not crossing and dilated is not None and config.refine_reach > 0:
            d0 = edge_diameter_raw(tree.edges[pe])
            try:
                _, hit = fit_junction(tree, node, [pe] + kids, max(config.direction_window_px, math.ceil(d0)))
            except DirectionError:
                hit = None
            if hit is not None and math.hypot(hit[0] - x, hit[1] - y) <= config.refine_reach * d0:
                crossing = _covered(dilated, hit[0], hit[1])
        if not crossing and len(kids) == 3:
            try:
                dirs = [_direction_from(tree, eid, node, config.direction_window_px) for eid in [pe] + kids]
                crossing = is_crossing_pattern(dirs, config.collinear_tol_deg)
            except DirectionError:
                pass
        if crossing:
            out.append(JunctionClass(node, JunctionKind.CrossingExcluded, pe, tuple(kids)))
            continue
        by_size = sorted(kids, key=lambda k: (-edge_diameter_raw(tree.edges[k]), k))
        d1, d2 = by_size[0], by_size[1]
        o1, o2 = tree.edges[d1].order, tree.edges[d2].order
        kind = JunctionKind.Bifurcation if o1 == o2 else JunctionKind.Branching
        out.append(JunctionClass(node, kind, pe, (d1, d2)))
        for extra in by_size[2:]:
            out.append(JunctionClass(node, JunctionKind.Branching, pe, (d1, extra), secondary=True))
    return out
