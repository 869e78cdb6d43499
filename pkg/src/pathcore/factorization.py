"""Factor a discrete grid homotopy through a metric tree.

The grid carries the L1 metric (spacing 1/n horizontally, 1/m vertically).
Each grid edge is weighted by the length of its image segment; all-pairs
shortest paths over the weighted grid give a pseudo-metric whose
zero-distance collapse, when it satisfies the four-point condition, is a
tree metric.  The quotient map and the realization map back into the
target come with machine-checkable Lipschitz certificates.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse.csgraph import connected_components, csgraph_from_dense, dijkstra

from .config import DEFAULT
from .errors import CertificateError, InputError, NotTreeLike, QuotientInconsistent
from .metric_tree import (
    MetricTree,
    TreePoint,
    four_point_check,
    tree_from_metric,
)
from .targets import TargetPath, discrete_lipschitz

# Above this many collapse classes the four-point condition is certified
# constructively (reconstruct + verify) instead of by O(k^4) enumeration.
FOUR_POINT_ENUM_CAP = 96


@dataclass(frozen=True)
class GridHomotopy:
    """(m+1) x (n+1) grid of target points.

    Row 0 samples the source path, row m the destination path; columns 0
    and n are constant (endpoints pinned).  ``points[s][j]`` is the point
    at height s, column j.
    """

    rows: int  # m
    cols: int  # n
    points: tuple
    target_tag: str

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise InputError(f"grid needs m, n >= 1, got ({self.rows}, {self.cols})")
        if len(self.points) != self.rows + 1:
            raise InputError(
                f"grid declares {self.rows + 1} rows, got {len(self.points)}"
            )
        for s, row in enumerate(self.points):
            if len(row) != self.cols + 1:
                raise InputError(
                    f"row {s} has {len(row)} points, expected {self.cols + 1}"
                )
        first = self.points[0][0]
        last = self.points[0][self.cols]
        for s in range(1, self.rows + 1):
            if self.points[s][0] != first:
                raise InputError(f"column 0 is not constant (row {s} differs)")
            if self.points[s][self.cols] != last:
                raise InputError(f"column {self.cols} is not constant (row {s} differs)")

    def row_path(self, s: int) -> TargetPath:
        return TargetPath(tuple(self.points[s]))

    def flat_index(self, s: int, j: int) -> int:
        return s * (self.cols + 1) + j

    def unflatten(self, i: int) -> tuple[int, int]:
        return divmod(i, self.cols + 1)


def stack_homotopies(homotopies) -> GridHomotopy:
    """Concatenate homotopies vertically; each seam row must match the next
    homotopy's first row exactly."""
    homotopies = list(homotopies)
    if not homotopies:
        raise InputError("nothing to stack")
    base = homotopies[0]
    rows = list(base.points)
    for h in homotopies[1:]:
        if h.cols != base.cols or h.target_tag != base.target_tag:
            raise InputError("stacked homotopies must share columns and target")
        if h.points[0] != rows[-1]:
            raise InputError("seam mismatch while stacking homotopies")
        rows.extend(h.points[1:])
    return GridHomotopy(len(rows) - 1, base.cols, tuple(rows), base.target_tag)


@dataclass(frozen=True)
class GridGraph:
    """4-neighbor grid with one weight per edge (image segment lengths)."""

    rows: int
    cols: int
    horizontal: np.ndarray  # (m+1, n)
    vertical: np.ndarray  # (m, n+1)

    def dense_matrix(self) -> np.ndarray:
        size = (self.rows + 1) * (self.cols + 1)
        mat = np.full((size, size), np.inf)
        np.fill_diagonal(mat, 0.0)
        n1 = self.cols + 1
        for s in range(self.rows + 1):
            for j in range(self.cols):
                a = s * n1 + j
                w = self.horizontal[s, j]
                mat[a, a + 1] = w
                mat[a + 1, a] = w
        for s in range(self.rows):
            for j in range(self.cols + 1):
                a = s * n1 + j
                w = self.vertical[s, j]
                mat[a, a + n1] = w
                mat[a + n1, a] = w
        return mat


def edge_weights(space, h: GridHomotopy) -> GridGraph:
    """Weight every grid edge by the length of its image segment."""
    m, n = h.rows, h.cols
    horizontal = np.zeros((m + 1, n))
    vertical = np.zeros((m, n + 1))
    for s in range(m + 1):
        row = h.points[s]
        for j in range(n):
            horizontal[s, j] = space.segment_length(row[j], row[j + 1])
    for s in range(m):
        row, nxt = h.points[s], h.points[s + 1]
        for j in range(n + 1):
            vertical[s, j] = space.segment_length(row[j], nxt[j])
    return GridGraph(m, n, horizontal, vertical)


def pseudo_metric(g: GridGraph) -> np.ndarray:
    """All-pairs shortest-path distances over the weighted grid.

    Zero-weight edges are genuine edges (csgraph null is inf, not 0).
    The result is symmetrized to remove summation-order noise.
    """
    dense = g.dense_matrix()
    graph = csgraph_from_dense(dense, null_value=np.inf)
    dist = dijkstra(graph, directed=False)
    return (dist + dist.T) * 0.5


@dataclass(frozen=True)
class Factorization:
    """Quotient tree plus the maps through it.

    ``psi`` assigns each grid vertex its class node (as a TreePoint table,
    row-major); ``phi`` realizes tree nodes back in the target.  The tree
    metric between psi images reproduces the grid pseudo-metric, phi is
    1-Lipschitz, and phi o psi reproduces the grid map.
    """

    space: object
    tree: MetricTree
    psi_nodes: tuple  # (m+1) x (n+1) node ids
    phi: dict  # node id -> target point
    lip_h: float
    lip_gamma: float
    class_of: np.ndarray  # flat grid index -> class index
    representatives: tuple[int, ...]  # class index -> flat grid index
    label_nodes: tuple[int, ...]  # class index -> tree node
    collapsed: np.ndarray  # class-to-class pseudo-distances

    def psi(self, s: int, j: int) -> TreePoint:
        return self.tree.node_point(self.psi_nodes[s][j])

    def phi_point(self, p: TreePoint):
        """Realize an arbitrary tree point: nodes by table lookup, edge
        interiors by proportional interpolation along the canonical segment
        between the incident node images."""
        if p.is_node():
            return self.phi[p.node]
        u, v, length = self.tree.edges[p.edge]
        return self.space.interpolate(self.phi[u], self.phi[v], p.offset / length)


def _collapse_classes(table: np.ndarray, collapse_tol: float):
    """Union grid vertices at pseudo-distance <= collapse_tol."""
    close = table <= collapse_tol
    n_classes, labels = connected_components(close, directed=False)
    reps = []
    for c in range(n_classes):
        members = np.flatnonzero(labels == c)
        reps.append(int(members[0]))  # lowest (row, col) in row-major order
    # deterministic class order: by representative flat index
    order = np.argsort(reps)
    remap = np.empty(n_classes, dtype=int)
    remap[order] = np.arange(n_classes)
    labels = remap[labels]
    reps = [reps[i] for i in order]
    return np.asarray(labels), tuple(reps)


def quotient_tree(
    space,
    h: GridHomotopy,
    collapse_tol: float = DEFAULT.collapse_tol,
    tree_tol: float = DEFAULT.tree_tol,
    eps: float = DEFAULT.eps_num,
) -> Factorization:
    """Collapse the grid pseudo-metric and build the quotient tree.

    Raises NotTreeLike when the collapsed table violates the four-point
    condition beyond ``tree_tol`` (the homotopy does not factor through a
    tree at this resolution), and QuotientInconsistent when a collapse
    class contains two distinct target points.
    """
    graph = edge_weights(space, h)
    table = pseudo_metric(graph)
    class_of, reps = _collapse_classes(table, collapse_tol)
    k = len(reps)
    rep_idx = np.asarray(reps)
    collapsed = table[np.ix_(rep_idx, rep_idx)]
    np.fill_diagonal(collapsed, 0.0)

    flat_points = [pt for row in h.points for pt in row]
    for i, c in enumerate(class_of):
        rep_pt = flat_points[reps[c]]
        pt = flat_points[i]
        if pt != rep_pt and space.distance(pt, rep_pt) > eps:
            s, j = h.unflatten(i)
            raise QuotientInconsistent(
                f"grid vertex ({s}, {j}) and its class representative map to "
                f"target points {space.distance(pt, rep_pt):.3e} apart"
            )

    if k <= FOUR_POINT_ENUM_CAP:
        report = four_point_check(collapsed, tol=tree_tol)
        if not report.is_tree_metric:
            raise NotTreeLike(
                f"collapsed pseudo-metric violates the four-point condition "
                f"by {report.worst_violation:.3e}",
                witness=report.witness,
                violation=report.worst_violation,
            )
    embedding = tree_from_metric(collapsed, tol=max(tree_tol, eps))
    # NotTreeLike (via ReconstructionError) propagates when reconstruction
    # drifts: for k above the enumeration cap this is the tree-metric check.

    tree = embedding.tree
    label_nodes = embedding.label_nodes

    phi: dict[int, object] = {}
    for c, node in enumerate(label_nodes):
        phi[node] = flat_points[reps[c]]
    for node in tree.nodes:
        if node in phi:
            continue
        la, lb, dist_a = embedding.hosts[node]
        pa, pb = phi[label_nodes[la]], phi[label_nodes[lb]]
        denom = collapsed[la, lb]
        frac = dist_a / denom if denom > 0 else 0.0
        phi[node] = space.interpolate(pa, pb, frac)

    n1 = h.cols + 1
    psi_nodes = tuple(
        tuple(int(label_nodes[class_of[s * n1 + j]]) for j in range(n1))
        for s in range(h.rows + 1)
    )

    lip_gamma = discrete_lipschitz(space, h.points[0], 1.0 / h.cols)
    lip_h = _grid_lipschitz(space, h)

    f = Factorization(
        space=space,
        tree=tree,
        psi_nodes=psi_nodes,
        phi=phi,
        lip_h=lip_h,
        lip_gamma=lip_gamma,
        class_of=class_of,
        representatives=reps,
        label_nodes=label_nodes,
        collapsed=collapsed,
    )
    _verify_quotient(f, table, eps, collapse_tol)
    return f


def _grid_lipschitz(space, h: GridHomotopy) -> float:
    """Discrete Lipschitz constant of the grid map in the L1 grid metric."""
    m, n = h.rows, h.cols
    worst = 0.0
    for s in range(m + 1):
        row = h.points[s]
        worst = max(
            worst,
            max(space.distance(row[j], row[j + 1]) for j in range(n)) * n,
        )
    for s in range(m):
        row, nxt = h.points[s], h.points[s + 1]
        worst = max(
            worst,
            max(space.distance(row[j], nxt[j]) for j in range(n + 1)) * m,
        )
    return worst


def _verify_quotient(f: Factorization, table: np.ndarray, eps, collapse_tol):
    """Tree distances between class nodes must reproduce the pseudo-metric."""
    tree = f.tree
    idx = tree._index
    node_idx = np.array([idx[n] for n in f.label_nodes])
    realized = tree.node_distances[np.ix_(node_idx, node_idx)]
    k = len(f.label_nodes)
    slack = eps + collapse_tol * max(k, 1)
    drift = float(np.max(np.abs(realized - f.collapsed))) if k else 0.0
    if drift > slack:
        raise QuotientInconsistent(
            f"quotient tree drifts from the pseudo-metric by {drift:.3e}"
        )
    # endpoint columns collapse to single classes
    first = {row[0] for row in f.psi_nodes}
    last = {row[-1] for row in f.psi_nodes}
    if len(first) != 1 or len(last) != 1:
        raise QuotientInconsistent("endpoint columns did not collapse to one class")


@dataclass(frozen=True)
class FactorizationReport:
    """Certificate values for a factorization, one check per field.

    Each ``*_slack`` is (bound - value); all slacks must be >= -eps.
    """

    lip_gamma: float
    lip_h: float
    lip_psi_row0: float
    lip_psi: float
    diam_row0_subtree: float
    phi_defect: float  # max over node pairs of d_M(phi u, phi v) - d_T(u, v)
    row0_slack: float
    grid_slack: float
    diam_slack: float
    phi_slack: float
    worst_pairs: dict

    @property
    def passed(self) -> bool:
        return min(self.row0_slack, self.grid_slack, self.diam_slack, self.phi_slack) >= 0

    def lines(self):
        return [
            f"lip_gamma {self.lip_gamma:.17g}",
            f"lip_h {self.lip_h:.17g}",
            f"lip_psi_row0 {self.lip_psi_row0:.17g}",
            f"lip_psi {self.lip_psi:.17g}",
            f"diam_row0_subtree {self.diam_row0_subtree:.17g}",
            f"phi_defect {self.phi_defect:.17g}",
            f"row0_slack {self.row0_slack:.17g}",
            f"grid_slack {self.grid_slack:.17g}",
            f"diam_slack {self.diam_slack:.17g}",
            f"phi_slack {self.phi_slack:.17g}",
        ]


def validate_factorization(
    f: Factorization, h: GridHomotopy, eps: float = DEFAULT.eps_num
) -> FactorizationReport:
    """Certify the factorization against its homotopy.

    (a) the quotient map restricted to row 0 is Lipschitz with constant at
        most that of the row-0 path;
    (b) the quotient map over the whole grid is Lipschitz with constant at
        most that of the grid map (quasi-convexity constant 1 for the L1
        grid);
    (c) the subtree spanned by the row-0 classes has diameter at most the
        row-0 Lipschitz constant;
    (d) the realization map is 1-Lipschitz on all node pairs.

    Raises CertificateError listing the violating pair when a check fails.
    """
    tree = f.tree
    idx = tree._index
    mat = tree.node_distances
    m, n = h.rows, h.cols

    worst_pairs = {}

    row0 = [f.psi_nodes[0][j] for j in range(n + 1)]
    lip_psi_row0 = 0.0
    for j in range(n):
        d = mat[idx[row0[j]], idx[row0[j + 1]]] * n
        if d > lip_psi_row0:
            lip_psi_row0 = float(d)
            worst_pairs["row0"] = ((0, j), (0, j + 1))

    lip_psi = lip_psi_row0
    worst_pairs["grid"] = worst_pairs.get("row0")
    for s in range(m + 1):
        nodes = f.psi_nodes[s]
        for j in range(n):
            d = mat[idx[nodes[j]], idx[nodes[j + 1]]] * n
            if d > lip_psi:
                lip_psi = float(d)
                worst_pairs["grid"] = ((s, j), (s, j + 1))
    for s in range(m):
        cur, nxt = f.psi_nodes[s], f.psi_nodes[s + 1]
        for j in range(n + 1):
            d = mat[idx[cur[j]], idx[nxt[j]]] * m
            if d > lip_psi:
                lip_psi = float(d)
                worst_pairs["grid"] = ((s, j), (s + 1, j))

    row0_nodes = sorted({idx[x] for x in row0})
    sub = mat[np.ix_(row0_nodes, row0_nodes)]
    diam_row0 = float(np.max(sub)) if len(row0_nodes) else 0.0
    a, b = np.unravel_index(int(np.argmax(sub)), sub.shape)
    worst_pairs["diam"] = (tree.nodes[row0_nodes[a]], tree.nodes[row0_nodes[b]])

    phi_defect = 0.0
    nodes = tree.nodes
    for i, u in enumerate(nodes):
        pu = f.phi[u]
        for v in nodes[i + 1 :]:
            defect = f.space.distance(pu, f.phi[v]) - mat[idx[u], idx[v]]
            if defect > phi_defect:
                phi_defect = float(defect)
                worst_pairs["phi"] = (u, v)

    report = FactorizationReport(
        lip_gamma=f.lip_gamma,
        lip_h=f.lip_h,
        lip_psi_row0=lip_psi_row0,
        lip_psi=lip_psi,
        diam_row0_subtree=diam_row0,
        phi_defect=phi_defect,
        row0_slack=f.lip_gamma + eps - lip_psi_row0,
        grid_slack=f.lip_h + eps - lip_psi,
        diam_slack=f.lip_gamma + eps - diam_row0,
        phi_slack=eps - phi_defect,
        worst_pairs=worst_pairs,
    )
    if not report.passed:
        failing = [
            name
            for name, slack in (
                ("row0", report.row0_slack),
                ("grid", report.grid_slack),
                ("diam", report.diam_slack),
                ("phi", report.phi_slack),
            )
            if slack < 0
        ]
        name = failing[0]
        raise CertificateError(
            f"factorization certificate(s) failed: {', '.join(failing)}",
            check=name,
            pair=worst_pairs.get(name),
            slack=min(
                report.row0_slack,
                report.grid_slack,
                report.diam_slack,
                report.phi_slack,
            ),
        )
    return report


# --------------------------------------------------------------------------- #
# Serialization                                                                #
# --------------------------------------------------------------------------- #


def format_grid(space, h: GridHomotopy) -> str:
    lines = [f"grid {h.rows} {h.cols} {h.target_tag}"]
    for row in h.points:
        for pt in row:
            lines.append(space.format_point(pt))
    return "\n".join(lines) + "\n"


def parse_grid(space, text: str) -> GridHomotopy:
    lines = [ln for ln in (raw.strip() for raw in text.splitlines()) if ln]
    if not lines:
        raise InputError("empty grid file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "grid":
        raise InputError(f"bad grid header: {lines[0]!r}")
    try:
        m, n = int(head[1]), int(head[2])
    except ValueError as exc:
        raise InputError(f"bad grid header: {lines[0]!r}") from exc
    if head[3] != space.tag:
        raise InputError(f"grid targets {head[3]!r}, expected {space.tag!r}")
    expected = (m + 1) * (n + 1)
    if len(lines) - 1 != expected:
        raise InputError(
            f"grid declares {expected} points, file has {len(lines) - 1}"
        )
    pts = []
    for lineno, ln in enumerate(lines[1:], start=2):
        try:
            pts.append(space.parse_point(ln.split()))
        except InputError as exc:
            raise InputError(f"line {lineno}: {exc}") from exc
    rows = tuple(
        tuple(pts[s * (n + 1) : (s + 1) * (n + 1)]) for s in range(m + 1)
    )
    return GridHomotopy(m, n, rows, space.tag)
