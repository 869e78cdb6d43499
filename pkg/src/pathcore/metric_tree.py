"""Finite metric trees: exact geodesics, diameter, tree-metric validation,
and reconstruction of a tree from a compatible distance table.

A tree is a connected acyclic graph with strictly positive edge lengths.
Points live either at nodes or strictly inside edges; between any two points
there is a unique arc, and all queries here are exact up to float rounding.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .config import DEFAULT
from .errors import InputError, ReconstructionError


@dataclass(frozen=True)
class TreePoint:
    """A point of a metric tree in canonical form.

    Either ``node`` is set (the point sits at that node), or ``edge`` and
    ``offset`` are set with ``0 < offset < length(edge)``.  Build instances
    through :meth:`MetricTree.point` / :meth:`MetricTree.node_point` so the
    canonical form is enforced; two points are equal iff their canonical
    forms are equal.
    """

    node: int | None = None
    edge: int | None = None
    offset: float = 0.0

    def is_node(self) -> bool:
        return self.node is not None


class MetricTree:
    """Immutable finite tree with positive edge lengths.

    Parameters
    ----------
    edges : iterable of (u, v, length)
        Edge list; the position in this list is the edge identifier.
    nodes : iterable of int, optional
        Node identifiers.  Defaults to the nodes appearing in ``edges``;
        must be given explicitly for a single-node tree.
    """

    def __init__(self, edges, nodes=None):
        edge_list = []
        for entry in edges:
            u, v, length = entry
            edge_list.append((int(u), int(v), float(length)))
        node_set = set()
        for u, v, _ in edge_list:
            node_set.add(u)
            node_set.add(v)
        if nodes is not None:
            node_set.update(int(x) for x in nodes)
        if not node_set:
            raise InputError("a tree needs at least one node")
        self.edges: tuple[tuple[int, int, float], ...] = tuple(edge_list)
        self.nodes: tuple[int, ...] = tuple(sorted(node_set))
        self._validate()

    def _validate(self):
        if len(self.edges) != len(self.nodes) - 1:
            raise InputError(
                f"not a tree: {len(self.nodes)} nodes need "
                f"{len(self.nodes) - 1} edges, got {len(self.edges)}"
            )
        for eid, (u, v, length) in enumerate(self.edges):
            if not math.isfinite(length) or length <= DEFAULT.min_edge:
                raise InputError(f"edge {eid} has non-positive length {length}")
            if u == v:
                raise InputError(f"edge {eid} is a self-loop at node {u}")
        # connectivity: |E| = |V|-1 plus connected <=> acyclic tree
        if self.nodes:
            seen = {self.nodes[0]}
            stack = [self.nodes[0]]
            while stack:
                x = stack.pop()
                for nbr, _ in self.adjacency.get(x, ()):
                    if nbr not in seen:
                        seen.add(nbr)
                        stack.append(nbr)
            if len(seen) != len(self.nodes):
                raise InputError("edge graph is not connected")

    @cached_property
    def adjacency(self) -> dict[int, tuple[tuple[int, int], ...]]:
        """node -> ((neighbor, edge_id), ...) sorted by edge id."""
        adj: dict[int, list[tuple[int, int]]] = {n: [] for n in self.nodes}
        for eid, (u, v, _) in enumerate(self.edges):
            adj[u].append((v, eid))
            adj[v].append((u, eid))
        return {n: tuple(sorted(pairs, key=lambda p: p[1])) for n, pairs in adj.items()}

    @cached_property
    def _index(self) -> dict[int, int]:
        return {n: i for i, n in enumerate(self.nodes)}

    @cached_property
    def node_distances(self) -> np.ndarray:
        """Dense matrix of node-to-node distances, indexed by node order."""
        k = len(self.nodes)
        if len(self.edges) == 0:
            return np.zeros((k, k))
        rows, cols, vals = [], [], []
        for u, v, length in self.edges:
            iu, iv = self._index[u], self._index[v]
            rows += [iu, iv]
            cols += [iv, iu]
            vals += [length, length]
        graph = csr_matrix((vals, (rows, cols)), shape=(k, k))
        mat = dijkstra(graph, directed=False)
        return (mat + mat.T) * 0.5  # exact symmetry

    def edge_length(self, eid: int) -> float:
        self._check_edge(eid)
        return self.edges[eid][2]

    def node_point(self, node: int) -> TreePoint:
        if node not in self._index:
            raise InputError(f"unknown node {node}")
        return TreePoint(node=node)

    def point(self, edge: int, offset: float, tol: float = DEFAULT.eps_num) -> TreePoint:
        """Canonicalize (edge, offset): offsets within ``tol`` of an endpoint
        become the incident node."""
        self._check_edge(edge)
        u, v, length = self.edges[edge]
        offset = float(offset)
        if offset < -tol or offset > length + tol:
            raise InputError(f"offset {offset} outside edge {edge} of length {length}")
        if offset <= tol:
            return TreePoint(node=u)
        if offset >= length - tol:
            return TreePoint(node=v)
        return TreePoint(edge=edge, offset=offset)

    def check_point(self, p: TreePoint):
        if p.is_node():
            if p.node not in self._index:
                raise InputError(f"unknown node {p.node}")
        else:
            self._check_edge(p.edge)
            length = self.edges[p.edge][2]
            if not (0.0 < p.offset < length):
                raise InputError(
                    f"offset {p.offset} not interior to edge {p.edge} (length {length})"
                )

    def _check_edge(self, eid):
        if not isinstance(eid, (int, np.integer)) or not 0 <= eid < len(self.edges):
            raise InputError(f"unknown edge identifier {eid!r}")

    def node_path(self, a: int, b: int) -> list[tuple[int, int]]:
        """The unique node path a -> b as [(node, arriving_edge_id), ...];
        the first entry has arriving edge -1."""
        if a == b:
            return [(a, -1)]
        parent: dict[int, tuple[int, int]] = {a: (a, -1)}
        stack = [a]
        while stack:
            x = stack.pop()
            if x == b:
                break
            for nbr, eid in self.adjacency[x]:
                if nbr not in parent:
                    parent[nbr] = (x, eid)
                    stack.append(nbr)
        if b not in parent:
            raise InputError(f"nodes {a} and {b} are not connected")
        rev = []
        x = b
        while x != a:
            px, eid = parent[x]
            rev.append((x, eid))
            x = px
        rev.append((a, -1))
        rev.reverse()
        return rev

    def format_point(self, p: TreePoint) -> str:
        """Serialize a point as ``<edge-id> <offset>``.

        Node points use the lowest-numbered incident edge, which makes the
        representation deterministic and round-trip stable.
        """
        if not p.is_node():
            return f"{p.edge} {p.offset:.17g}"
        pairs = self.adjacency[p.node]
        if not pairs:
            raise InputError("cannot serialize a point of a single-node tree as edge/offset")
        nbr, eid = min(pairs, key=lambda q: q[1])
        u, v, length = self.edges[eid]
        offset = 0.0 if u == p.node else length
        return f"{eid} {offset:.17g}"

    def parse_point(self, tokens) -> TreePoint:
        if len(tokens) != 2:
            raise InputError(f"expected '<edge> <offset>', got {tokens!r}")
        try:
            eid = int(tokens[0])
            offset = float(tokens[1])
        except ValueError as exc:
            raise InputError(f"bad tree point {tokens!r}") from exc
        return self.point(eid, offset)


# --------------------------------------------------------------------------- #
# Distance and geodesics                                                       #
# --------------------------------------------------------------------------- #


def _anchor_options(t: MetricTree, p: TreePoint):
    """Ways to reach the node skeleton from ``p``: (node, cost, segment)."""
    if p.is_node():
        return ((p.node, 0.0, None),)
    u, v, length = t.edges[p.edge]
    return (
        (u, p.offset, (p.edge, p.offset, 0.0)),
        (v, length - p.offset, (p.edge, p.offset, length)),
    )


def tree_distance(t: MetricTree, p: TreePoint, q: TreePoint) -> float:
    """Length of the unique arc between two points of ``t``."""
    t.check_point(p)
    t.check_point(q)
    if p == q:
        return 0.0
    if not p.is_node() and not q.is_node() and p.edge == q.edge:
        return abs(p.offset - q.offset)
    mat = t.node_distances
    idx = t._index
    best = math.inf
    for a, cost_a, _ in _anchor_options(t, p):
        for b, cost_b, _ in _anchor_options(t, q):
            d = cost_a + mat[idx[a], idx[b]] + cost_b
            if d < best:
                best = d
    return float(best)


@dataclass(frozen=True)
class TreeGeodesic:
    """Arc-length parametrization of the unique arc between two points.

    ``segments`` lists (edge_id, start_offset, end_offset) pieces in travel
    order; ``node_sequence`` lists the nodes the arc passes through, endpoint
    nodes included.  Evaluation satisfies
    ``tree_distance(eval(s), eval(s')) == total_length * |s - s'|``.
    """

    tree: MetricTree
    source: TreePoint
    target: TreePoint
    node_sequence: tuple[int, ...]
    segments: tuple[tuple[int, float, float], ...]
    total_length: float

    @cached_property
    def _cumulative(self) -> tuple[float, ...]:
        acc = [0.0]
        for _, o0, o1 in self.segments:
            acc.append(acc[-1] + abs(o1 - o0))
        return tuple(acc)


def tree_geodesic(t: MetricTree, p: TreePoint, q: TreePoint) -> TreeGeodesic:
    """The unique arc from ``p`` to ``q``, arc-length parametrized over [0, 1]."""
    t.check_point(p)
    t.check_point(q)
    if p == q:
        seq = (p.node,) if p.is_node() else ()
        return TreeGeodesic(t, p, q, seq, (), 0.0)
    if not p.is_node() and not q.is_node() and p.edge == q.edge:
        seg = (p.edge, p.offset, q.offset)
        return TreeGeodesic(t, p, q, (), (seg,), abs(q.offset - p.offset))

    mat = t.node_distances
    idx = t._index
    best = None
    for a, cost_a, head in _anchor_options(t, p):
        for b, cost_b, tail in _anchor_options(t, q):
            d = cost_a + mat[idx[a], idx[b]] + cost_b
            if best is None or d < best[0] - 1e-15:
                best = (d, a, b, head, tail)
    total, a, b, head, tail = best

    segments: list[tuple[int, float, float]] = []
    if head is not None:
        eid, o0, o1 = head
        segments.append((eid, o0, o1))
    path = t.node_path(a, b)
    nodes = tuple(x for x, _ in path)
    prev = a
    for x, eid in path[1:]:
        u, v, length = t.edges[eid]
        if u == prev:
            segments.append((eid, 0.0, length))
        else:
            segments.append((eid, length, 0.0))
        prev = x
    if tail is not None:
        eid, o0, o1 = tail
        segments.append((eid, o1, o0))
    # drop zero-length head/tail stubs created by anchoring at a node
    segments = [s for s in segments if abs(s[2] - s[1]) > 0.0]
    return TreeGeodesic(t, p, q, nodes, tuple(segments), float(total))


def geodesic_eval(g: TreeGeodesic, s: float) -> TreePoint:
    """Point at arc length ``s * total_length`` from the source along ``g``."""
    if not (-1e-12 <= s <= 1.0 + 1e-12):
        raise InputError(f"geodesic parameter {s} outside [0, 1]")
    s = min(max(s, 0.0), 1.0)
    if g.total_length <= 0.0 or not g.segments:
        return g.source
    if s == 0.0:
        return g.source
    if s == 1.0:
        return g.target
    arc = s * g.total_length
    cum = g._cumulative
    i = bisect_right(cum, arc) - 1
    if i >= len(g.segments):
        return g.target
    eid, o0, o1 = g.segments[i]
    span = abs(o1 - o0)
    frac = (arc - cum[i]) / span if span > 0 else 0.0
    offset = o0 + (o1 - o0) * frac
    return g.tree.point(eid, offset)


def diameter(t: MetricTree) -> float:
    """Largest distance between two points; attained at a pair of nodes.

    Double sweep: the farthest node from an arbitrary start is an endpoint
    of some diametral path (valid in trees).
    """
    if len(t.nodes) == 1:
        return 0.0
    d0 = _single_source(t, t.nodes[0])
    a = max(d0, key=lambda n: (d0[n], -n))
    da = _single_source(t, a)
    return float(max(da.values()))


def _single_source(t: MetricTree, src: int) -> dict[int, float]:
    dist = {src: 0.0}
    stack = [src]
    while stack:
        x = stack.pop()
        for nbr, eid in t.adjacency[x]:
            if nbr not in dist:
                dist[nbr] = dist[x] + t.edges[eid][2]
                stack.append(nbr)
    return dist


# --------------------------------------------------------------------------- #
# Tree-metric validation and reconstruction                                    #
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class FourPointReport:
    is_tree_metric: bool
    worst_violation: float
    witness: tuple[int, int, int, int]

    def lines(self):
        w = " ".join(str(i) for i in self.witness)
        return [
            f"is_tree_metric {int(self.is_tree_metric)}",
            f"worst_violation {self.worst_violation:.17g}",
            f"witness {w}",
        ]


def _as_distance_table(d) -> np.ndarray:
    arr = np.asarray(d, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InputError(f"distance table must be square, got shape {arr.shape}")
    if arr.size and np.min(arr) < -1e-12:
        raise InputError("distance table has negative entries")
    if arr.size and np.max(np.abs(arr - arr.T)) > 1e-12:
        raise InputError("distance table is not symmetric")
    if arr.size and np.max(np.abs(np.diag(arr))) > 1e-12:
        raise InputError("distance table has a non-zero diagonal")
    return arr


def four_point_check(d, tol: float = DEFAULT.tree_tol) -> FourPointReport:
    """Check the four-point condition (and, through degenerate quadruples,
    the triangle inequality) on a symmetric distance table.

    For every quadruple the excess
    ``d(x,y) + d(z,w) - max(d(x,z) + d(y,w), d(x,w) + d(y,z))``
    must be <= tol.  Enumeration is O(k^4); intended for desk-scale tables.
    """
    arr = _as_distance_table(d)
    k = arr.shape[0]
    worst = 0.0
    witness = (0, 0, 0, 0)
    for x in range(k):
        dx = arr[x]
        for y in range(x + 1, k):
            dy = arr[y]
            cross = dx[:, None] + dy[None, :]
            excess = (arr[x, y] + arr) - np.maximum(cross, cross.T)
            zflat = int(np.argmax(excess))
            z, w = divmod(zflat, k)
            if excess[z, w] > worst:
                worst = float(excess[z, w])
                witness = (x, y, z, w)
    return FourPointReport(worst <= tol, max(worst, 0.0), witness)


def four_point_excess(d, quad) -> float:
    """Excess of one quadruple; used to re-verify reported witnesses."""
    arr = _as_distance_table(d)
    x, y, z, w = quad
    return float(
        (arr[x, y] + arr[z, w])
        - max(arr[x, z] + arr[y, w], arr[x, w] + arr[y, z])
    )


@dataclass(frozen=True)
class TreeEmbedding:
    """Result of reconstructing a tree from a distance table.

    ``label_nodes[i]`` is the node hosting label i; ``hosts`` maps every node
    to (label_a, label_b, distance_from_a) locating it on the arc between two
    labels (labels host themselves at distance 0).
    """

    tree: MetricTree
    labels: tuple
    label_nodes: tuple[int, ...]
    hosts: dict[int, tuple[int, int, float]]

    def label_point(self, i: int) -> TreePoint:
        return self.tree.node_point(self.label_nodes[i])


class _TreeBuilder:
    """Mutable scratch structure for leaf insertion; frozen at the end."""

    def __init__(self):
        self.next_node = 0
        self.next_edge = 0
        self.edges: dict[int, tuple[int, int, float]] = {}
        self.adj: dict[int, dict[int, int]] = {}

    def new_node(self) -> int:
        n = self.next_node
        self.next_node += 1
        self.adj[n] = {}
        return n

    def add_edge(self, u: int, v: int, length: float) -> int:
        eid = self.next_edge
        self.next_edge += 1
        self.edges[eid] = (u, v, length)
        self.adj[u][v] = eid
        self.adj[v][u] = eid
        return eid

    def split_edge(self, eid: int, at: float) -> int:
        """Insert a node at distance ``at`` from the edge's u endpoint."""
        u, v, length = self.edges.pop(eid)
        del self.adj[u][v]
        del self.adj[v][u]
        w = self.new_node()
        self.add_edge(u, w, at)
        self.add_edge(w, v, length - at)
        return w

    def node_path(self, a: int, b: int):
        parent = {a: (a, -1)}
        stack = [a]
        while stack:
            x = stack.pop()
            if x == b:
                break
            for nbr, eid in self.adj[x].items():
                if nbr not in parent:
                    parent[nbr] = (x, eid)
                    stack.append(nbr)
        rev = []
        x = b
        while x != a:
            px, eid = parent[x]
            rev.append((x, eid))
            x = px
        rev.reverse()
        return rev

    def locate(self, start: int, toward: int, distance: float, tol: float):
        """Walk ``distance`` from ``start`` toward ``toward``; returns either
        ('node', id) or ('edge', eid, offset_from_walk_side_u)."""
        if distance <= tol:
            return ("node", start)
        remaining = distance
        prev = start
        for x, eid in self.node_path(start, toward):
            u, v, length = self.edges[eid]
            if remaining <= -tol:  # pragma: no cover - defensive
                break
            if remaining < length - tol:
                offset = remaining if u == prev else length - remaining
                return ("edge", eid, offset)
            remaining -= length
            if abs(remaining) <= tol:
                return ("node", x)
            prev = x
        return ("node", toward)

    def freeze(self) -> MetricTree:
        ordered = sorted(self.edges.items())
        return MetricTree(
            [self.edges[eid] for eid, _ in ordered],
            nodes=range(self.next_node),
        )


def tree_from_metric(d, labels=None, tol: float = DEFAULT.eps_num) -> TreeEmbedding:
    """Build a metric tree realizing the distance table ``d``.

    Iterative leaf insertion: label x is attached relative to a fixed
    reference label u at depth ``max_v (d(u,x) + d(u,v) - d(v,x)) / 2``
    (the deepest shared prefix of the arcs u->x and u->v), with pendant
    length ``d(u,x) - depth``.  Exact for tree metrics; the caller is
    expected to have validated the table (``four_point_check``).

    Raises ReconstructionError when the embedded labels fail to reproduce
    ``d`` within tolerance, carrying the worst witness quadruple found.
    """
    arr = _as_distance_table(d)
    k = arr.shape[0]
    if k == 0:
        raise InputError("empty distance table")
    if labels is None:
        labels = tuple(range(k))
    else:
        labels = tuple(labels)
        if len(labels) != k:
            raise InputError("label count does not match table size")

    builder = _TreeBuilder()
    label_nodes: list[int] = [builder.new_node()]
    hosts: dict[int, tuple[int, int, float]] = {0: (0, 0, 0.0)}

    for x in range(1, k):
        if len(builder.edges) == 0 and len(set(label_nodes)) == 1:
            # everything so far collapsed to one node
            base = label_nodes[0]
            if arr[x, 0] <= tol:
                label_nodes.append(base)
                continue
            node = builder.new_node()
            builder.add_edge(base, node, arr[x, 0])
            label_nodes.append(node)
            hosts[node] = (x, x, 0.0)
            continue

        u = 0
        inserted = np.arange(x)
        depths = 0.5 * (arr[u, x] + arr[u, inserted] - arr[x, inserted])
        v_star = int(np.argmax(depths))
        depth = float(depths[v_star])
        depth = min(max(depth, 0.0), float(arr[u, x]))
        pendant = arr[u, x] - depth

        kind_info = builder.locate(
            label_nodes[u], label_nodes[v_star], depth, tol
        )
        if kind_info[0] == "node":
            attach = kind_info[1]
        else:
            _, eid, offset = kind_info
            attach = builder.split_edge(eid, offset)
            hosts[attach] = (u, v_star, depth)
        if pendant <= tol:
            label_nodes.append(attach)
            hosts[attach] = (x, x, 0.0)
        else:
            leaf = builder.new_node()
            builder.add_edge(attach, leaf, pendant)
            label_nodes.append(leaf)
            hosts[leaf] = (x, x, 0.0)

    tree = builder.freeze()
    embedding = TreeEmbedding(tree, labels, tuple(label_nodes), hosts)
    _verify_embedding(arr, embedding, tol)
    return embedding


def _verify_embedding(arr: np.ndarray, emb: TreeEmbedding, tol: float):
    k = arr.shape[0]
    idx = emb.tree._index
    node_idx = np.array([idx[n] for n in emb.label_nodes])
    realized = emb.tree.node_distances[np.ix_(node_idx, node_idx)]
    drift = np.abs(realized - arr)
    worst = float(np.max(drift)) if k else 0.0
    if worst <= max(tol, 1e-9) + 1e-12:
        return
    i, j = np.unravel_index(int(np.argmax(drift)), drift.shape)
    witness, violation = _hunt_witness(arr, int(i), int(j))
    raise ReconstructionError(
        f"reconstructed tree drifts from the table by {worst:.3e} "
        f"at labels ({i}, {j})",
        witness=witness,
        violation=violation,
    )


def _hunt_witness(arr: np.ndarray, i: int, j: int):
    """Worst four-point quadruple containing the pair (i, j)."""
    k = arr.shape[0]
    best = (0.0, (i, j, i, j))
    for x, y in ((i, j),):
        cross = arr[x][:, None] + arr[y][None, :]
        excess = (arr[x, y] + arr) - np.maximum(cross, cross.T)
        zflat = int(np.argmax(excess))
        z, w = divmod(zflat, k)
        if excess[z, w] > best[0]:
            best = (float(excess[z, w]), (x, y, z, w))
    # also try quadruples where (i, j) is a cross pair
    for a in range(k):
        cross = arr[a][:, None] + arr[i][None, :]
        excess = (arr[a, i] + arr) - np.maximum(cross, cross.T)
        zflat = int(np.argmax(excess))
        z, w = divmod(zflat, k)
        if excess[z, w] > best[0]:
            best = (float(excess[z, w]), (a, i, z, w))
    violation, witness = best
    return witness, violation


# --------------------------------------------------------------------------- #
# Serialization                                                                #
# --------------------------------------------------------------------------- #


def format_tree(t: MetricTree) -> str:
    lines = [f"tree {len(t.nodes)}"]
    for u, v, length in t.edges:
        lines.append(f"edge {u} {v} {length:.17g}")
    return "\n".join(lines) + "\n"


def parse_tree(text: str) -> MetricTree:
    lines = [ln for ln in (raw.strip() for raw in text.splitlines()) if ln]
    if not lines:
        raise InputError("empty tree file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "tree":
        raise InputError(f"bad tree header: {lines[0]!r}")
    try:
        n = int(head[1])
    except ValueError as exc:
        raise InputError(f"bad node count in {lines[0]!r}") from exc
    edges = []
    for lineno, ln in enumerate(lines[1:], start=2):
        tokens = ln.split()
        if len(tokens) != 4 or tokens[0] != "edge":
            raise InputError(f"line {lineno}: expected 'edge <u> <v> <length>'")
        try:
            edges.append((int(tokens[1]), int(tokens[2]), float(tokens[3])))
        except ValueError as exc:
            raise InputError(f"line {lineno}: bad edge data") from exc
    nodes = None
    if n == 1 and not edges:
        nodes = (0,)
    tree = MetricTree(edges, nodes=nodes)
    if len(tree.nodes) != n:
        raise InputError(
            f"header declares {n} nodes but edges span {len(tree.nodes)}"
        )
    return tree
