"""Homotopy instances with known ground truth.

Elementary moves (backtrack insertion/removal, reparametrization, null-loop
concatenation) transform a path while emitting a grid homotopy witnessing
the deformation rel endpoints.  The seeded generator corrupts a geodesic
arc with removable junk and hands back the inverse move sequence, so the
minimizer's answer is checkable against the arc length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .factorization import GridHomotopy, stack_homotopies
from .heisenberg import HPoint, chord_lift
from .metric_tree import MetricTree, TreePoint, geodesic_eval, tree_distance, tree_geodesic
from .targets import (
    HeisenbergTarget,
    TargetPath,
    TreeTarget,
    path_eval,
    points_equal,
    prefix_path,
    sample_path,
    splice_path,
)


@dataclass(frozen=True)
class Move:
    """One elementary deformation.

    ``insert_backtrack`` / ``remove_backtrack``: ``column`` is the attach
    vertex, ``spur`` the outward half of the excursion (the path carries
    spur-and-reverse).  ``concat_null_loop``: ``spur`` is again the outward
    half; rows contract it radially toward the attach point instead of
    clipping a prefix.  ``reparametrize``: ``profile`` is a monotone [0,1]
    sample table whose resolution sets the output vertex count.
    """

    kind: str
    column: int = -1
    spur: TargetPath | None = None
    profile: tuple[float, ...] | None = None


@dataclass(frozen=True)
class MoveSequence:
    """Moves applied left to right at a fixed grid resolution.

    ``cols`` is the column count of every emitted homotopy; applying a move
    to a path yields a path with identical endpoints, and composition is
    seam-exact because every row is sampled by the same function.
    """

    moves: tuple[Move, ...]
    seed: int
    cols: int
    rows_per_move: int


def _spliced_vertices(spur_out: TargetPath):
    """Vertex insert for an out-and-back excursion (attach point excluded)."""
    out = spur_out.vertices
    return out[1:] + tuple(reversed(out[:-1]))


def _remove_clean(p: TargetPath, column: int, spur: TargetPath) -> TargetPath:
    span = 2 * (len(spur.vertices) - 1)
    verts = p.vertices
    return TargetPath(verts[: column + 1] + verts[column + span + 1 :])


def _backtrack_rows(space, path, column, spur, n, m, contract="prefix"):
    """Rows of the retraction homotopy, from the full excursion down to the
    clean path.  ``path`` must carry the excursion at ``column``."""
    out = spur.vertices
    k = len(out) - 1
    span = 2 * k
    verts = path.vertices
    if column < 0 or column + span >= len(verts):
        raise InputError(f"excursion at column {column} exceeds the path")
    expected = out + tuple(reversed(out[:-1]))
    actual = verts[column : column + span + 1]
    for a, b in zip(expected, actual):
        if not points_equal(space, a, b):
            raise InputError("path does not carry the declared excursion")
    pre = verts[: column + 1]
    post = verts[column + span :]
    clean = TargetPath(pre + post[1:])

    steps = max(m - 1, 1)
    rows = []
    for s in range(steps + 1):
        f = 1.0 - s / steps
        if contract == "prefix":
            shrunk = prefix_path(space, spur, f).vertices
        else:  # radial contraction toward the attach point
            attach = out[0]
            shrunk = tuple(
                attach if v == attach else space.interpolate(attach, v, f)
                for v in out
            )
        middle = shrunk[1:] + tuple(reversed(shrunk[1:-1]))
        rows.append(sample_path(space, TargetPath(pre + middle + post), n).vertices)
    rows.append(sample_path(space, clean, n).vertices)
    return rows, clean


def _constant_rows(space, p: TargetPath, n: int, m: int) -> GridHomotopy:
    row = sample_path(space, p, n).vertices
    return GridHomotopy(m, n, tuple(row for _ in range(m + 1)), space.tag)


def insert_backtrack(space, p: TargetPath, column: int, spur: TargetPath, n: int, m: int):
    """Splice an out-and-back excursion at ``column``.

    The emitted homotopy grows the excursion from nothing; every row's image
    is the original image plus part of one arc, so on tree targets its
    factorization always passes tree validation.
    """
    if not 0 <= column < len(p.vertices):
        raise InputError(f"column {column} outside path of {len(p.vertices)} vertices")
    if not points_equal(space, spur.vertices[0], p.vertices[column]):
        raise InputError("spur does not start at the chosen path vertex")
    if len(spur.vertices) == 1:
        return p, _constant_rows(space, p, n, m)
    new_path = splice_path(p, column, _spliced_vertices(spur))
    rows, _ = _backtrack_rows(space, new_path, column, spur, n, m)
    rows.reverse()
    return new_path, GridHomotopy(len(rows) - 1, n, tuple(rows), space.tag)


def remove_backtrack(space, p: TargetPath, column: int, spur: TargetPath, n: int, m: int):
    """Retract the out-and-back excursion carried at ``column``."""
    if len(spur.vertices) == 1:
        return p, _constant_rows(space, p, n, m)
    rows, clean = _backtrack_rows(space, p, column, spur, n, m)
    return clean, GridHomotopy(len(rows) - 1, n, tuple(rows), space.tag)


def concat_null_loop(space, p: TargetPath, column: int, spur: TargetPath, n: int, m: int):
    """Splice a contractible out-and-back loop at ``column``; the emitted
    homotopy grows it from the attach point by radial (geodesic)
    interpolation rather than prefix clipping."""
    if not 0 <= column < len(p.vertices):
        raise InputError(f"column {column} outside path of {len(p.vertices)} vertices")
    if not points_equal(space, spur.vertices[0], p.vertices[column]):
        raise InputError("loop does not start at the chosen path vertex")
    if len(spur.vertices) == 1:
        return p, _constant_rows(space, p, n, m)
    new_path = splice_path(p, column, _spliced_vertices(spur))
    rows, _ = _backtrack_rows(space, new_path, column, spur, n, m, contract="radial")
    rows.reverse()
    return new_path, GridHomotopy(len(rows) - 1, n, tuple(rows), space.tag)


def reparametrize(space, p: TargetPath, profile, n: int, m: int):
    """Resample along a monotone profile; image and length are preserved
    (tree targets always; lifted polylines when the profile's values keep
    the original vertex parameters)."""
    prof = tuple(float(t) for t in profile)
    if len(prof) < 2 or abs(prof[0]) > 1e-12 or abs(prof[-1] - 1.0) > 1e-12:
        raise InputError("profile must run from 0 to 1")
    for a, b in zip(prof, prof[1:]):
        if b < a - 1e-12:
            raise InputError("profile must be monotone non-decreasing")
    out_n = len(prof) - 1
    result = TargetPath(tuple(path_eval(space, p, t) for t in prof))
    rows = []
    for s in range(m + 1):
        tau = s / m
        blended = [(1.0 - tau) * (j / out_n) + tau * prof[j] for j in range(out_n + 1)]
        row = TargetPath(tuple(path_eval(space, p, t) for t in blended))
        rows.append(sample_path(space, row, n).vertices)
    return result, GridHomotopy(m, n, tuple(rows), space.tag)


def apply_move(space, p: TargetPath, move: Move, n: int, m: int):
    if move.kind == "insert_backtrack":
        return insert_backtrack(space, p, move.column, move.spur, n, m)
    if move.kind == "remove_backtrack":
        return remove_backtrack(space, p, move.column, move.spur, n, m)
    if move.kind == "concat_null_loop":
        return concat_null_loop(space, p, move.column, move.spur, n, m)
    if move.kind == "reparametrize":
        return reparametrize(space, p, move.profile, n, m)
    raise InputError(f"unknown move kind {move.kind!r}")


def compose_moves(space, gamma: TargetPath, seq: MoveSequence):
    """Apply all moves, stacking their homotopies into one grid.

    Returns (final_path, stacked_homotopy, intermediate_paths).
    """
    current = sample_path(space, gamma, seq.cols)
    paths = [current]
    homotopies = []
    for move in seq.moves:
        current, hom = apply_move(space, current, move, seq.cols, seq.rows_per_move)
        homotopies.append(hom)
        paths.append(current)
    return current, stack_homotopies(homotopies), paths


# --------------------------------------------------------------------------- #
# Seeded generators                                                            #
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class InstanceBundle:
    """A generated problem with its ground truth.

    ``gamma`` is the corrupted path, ``moves`` deform it back, ``beta`` is
    the final path of the chain, ``homotopy`` the composed grid, ``truth``
    the length of the unique arc between gamma's endpoints.
    """

    tree: MetricTree | None
    space: object
    gamma: TargetPath
    beta: TargetPath
    moves: MoveSequence
    homotopy: GridHomotopy
    truth: float


def random_tree(rng, size: int) -> MetricTree:
    """Random tree on ``size`` nodes with uniform edge lengths."""
    if size < 1:
        raise InputError(f"tree size must be >= 1, got {size}")
    if size == 1:
        return MetricTree((), nodes=(0,))
    edges = []
    for child in range(1, size):
        parent = int(rng.integers(0, child))
        length = float(rng.uniform(0.3, 1.3))
        edges.append((parent, child, length))
    return MetricTree(edges)


def _random_walk_spur(rng, tree: MetricTree, attach: TreePoint, steps: int) -> TargetPath:
    """Outward walk from ``attach``: first to an incident node, then along
    random edges, avoiding immediate backtracking with probability 0.7."""
    verts = [attach]
    if attach.is_node():
        nbrs = tree.adjacency[attach.node]
        nbr, _ = nbrs[int(rng.integers(0, len(nbrs)))]
        verts.append(tree.node_point(nbr))
        prev, node = attach.node, nbr
    else:
        u, v, _ = tree.edges[attach.edge]
        node = u if rng.random() < 0.5 else v
        verts.append(tree.node_point(node))
        prev = None
    for _ in range(steps):
        nbrs = [nbr for nbr, _ in tree.adjacency[node]]
        if prev is not None and len(nbrs) > 1 and rng.random() < 0.7:
            nbrs = [x for x in nbrs if x != prev]
        nxt = int(nbrs[int(rng.integers(0, len(nbrs)))])
        verts.append(tree.node_point(nxt))
        prev, node = node, nxt
    return TargetPath(tuple(verts))


def _random_profile(rng, n: int) -> tuple[float, ...]:
    jumps = rng.uniform(0.3, 1.7, n)
    acc = np.concatenate([[0.0], np.cumsum(jumps)])
    acc /= acc[-1]
    acc[-1] = 1.0
    return tuple(float(t) for t in acc)


def random_instance(seed: int, tree_size: int, cols: int = 24, rows: int = 12) -> InstanceBundle:
    """Seeded tree-target instance.

    A geodesic arc between two random nodes is corrupted by 1-3 out-and-back
    excursions; the move sequence removes them in reverse insertion order,
    sometimes detours through a null-loop insert/remove pair, and sometimes
    ends with a reparametrization.  ``cols`` sets the base resolution; the
    final column count grows by two per excursion segment.
    """
    if tree_size < 2:
        raise InputError(f"instances need tree_size >= 2, got {tree_size}")
    rng = np.random.default_rng(seed)
    tree = random_tree(rng, tree_size)
    space = TreeTarget(tree)

    ia, ib = rng.choice(len(tree.nodes), size=2, replace=False)
    pa = tree.node_point(tree.nodes[int(ia)])
    pb = tree.node_point(tree.nodes[int(ib)])
    truth = tree_distance(tree, pa, pb)

    arc = tree_geodesic(tree, pa, pb)
    base_res = max(4, cols - 8)
    base = TargetPath(tuple(geodesic_eval(arc, k / base_res) for k in range(base_res + 1)))

    n_junk = int(rng.integers(1, 4))
    path = base
    inserted = []
    for _ in range(n_junk):
        col = int(rng.integers(1, len(path.vertices) - 1))
        spur = _random_walk_spur(rng, tree, path.vertices[col], int(rng.integers(0, 3)))
        inserted.append((col, spur))
        path = splice_path(path, col, _spliced_vertices(spur))
    gamma = path
    n = len(gamma.vertices) - 1
    m_move = max(2, rows // (n_junk + 2))

    moves = []
    sim = gamma
    for col, spur in reversed(inserted):
        moves.append(Move(kind="remove_backtrack", column=col, spur=spur))
        sim = _remove_clean(sim, col, spur)
    if rng.random() < 0.4:
        col = int(rng.integers(1, len(sim.vertices) - 1))
        spur = _random_walk_spur(rng, tree, sim.vertices[col], int(rng.integers(0, 2)))
        moves.append(Move(kind="concat_null_loop", column=col, spur=spur))
        moves.append(Move(kind="remove_backtrack", column=col, spur=spur))
    if rng.random() < 0.5:
        moves.append(Move(kind="reparametrize", profile=_random_profile(rng, n)))
    seq = MoveSequence(tuple(moves), seed=seed, cols=n, rows_per_move=m_move)

    beta, homotopy, _ = compose_moves(space, gamma, seq)
    return InstanceBundle(tree, space, gamma, beta, seq, homotopy, float(truth))


def loop_instance_tree(seed: int, radius: float = 0.1):
    """A contractible loop inside a small ball of a short-edged star tree.

    Returns (space, base_point, loop, moves); the loop is one or two
    out-and-back excursions from the center, all within ``radius``.
    """
    rng = np.random.default_rng(seed)
    legs = int(rng.integers(2, 5))
    lengths = rng.uniform(radius / 6, radius / 2.5, legs)
    tree = MetricTree([(0, i + 1, float(lengths[i])) for i in range(legs)])
    space = TreeTarget(tree)
    base = tree.node_point(0)

    excursions = int(rng.integers(1, 3))
    spurs = []
    for _ in range(excursions):
        leg = int(rng.integers(0, legs))
        off = float(rng.uniform(0.3, 0.95)) * tree.edges[leg][2]
        spurs.append(TargetPath((base, tree.point(leg, off))))

    verts = [base]
    for spur in spurs:
        verts.extend(_spliced_vertices(spur))
    loop = TargetPath(tuple(verts))
    n = max(8, len(loop.vertices) - 1)

    moves = []
    sim = loop
    for i in reversed(range(excursions)):
        col = 2 * i
        moves.append(Move(kind="remove_backtrack", column=col, spur=spurs[i]))
        sim = _remove_clean(sim, col, spurs[i])
    seq = MoveSequence(tuple(moves), seed=seed, cols=n, rows_per_move=3)
    return space, base, loop, seq


def loop_instance_h1(seed: int, radius: float = 0.1):
    """An out-and-back lifted planar spur at a random base point in the
    Heisenberg group; all loop vertices stay within CC distance ``radius``
    of the base (straight lifted chords are geodesics)."""
    rng = np.random.default_rng(seed)
    base = HPoint(
        float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1))
    )
    theta = float(rng.uniform(0, 2 * np.pi))
    length = float(rng.uniform(radius * 0.3, radius * 0.85))
    k = int(rng.integers(1, 4))
    tip_dir = HPoint(base.x + length * np.cos(theta), base.y + length * np.sin(theta), 0.0)
    out = [base] + [chord_lift(base, tip_dir, (i + 1) / k) for i in range(k)]
    spur = TargetPath(tuple(out))
    loop = TargetPath(spur.vertices + tuple(reversed(spur.vertices[:-1])))
    n = max(8, len(loop.vertices) - 1)
    seq = MoveSequence(
        (Move(kind="remove_backtrack", column=0, spur=spur),),
        seed=seed,
        cols=n,
        rows_per_move=3,
    )
    return HeisenbergTarget(), base, loop, seq


def lshape_instance_h1(seed: int, leg: float = 1.0, base_res: int = 8):
    """Lifted planar L-shape plus a doubled-back spur; the core must recover
    the L-shape's length exactly.  ``base_res`` must be even so the corner
    stays a sample."""
    if base_res % 2:
        raise InputError("base_res must be even so the corner is a vertex")
    rng = np.random.default_rng(seed)
    corner_steps = base_res // 2
    planar = []
    for i in range(corner_steps + 1):
        planar.append((leg * i / corner_steps, 0.0))
    for i in range(1, corner_steps + 1):
        planar.append((leg, leg * i / corner_steps))
    start = HPoint(planar[0][0], planar[0][1], 0.0)
    verts = [start]
    for x, y in planar[1:]:
        verts.append(chord_lift(verts[-1], HPoint(x, y, 0.0), 1.0))
    base = TargetPath(tuple(verts))
    space = HeisenbergTarget()

    col = int(rng.integers(1, corner_steps))  # attach on the first leg
    attach = base.vertices[col]
    drop = float(rng.uniform(0.2, 0.6)) * leg
    tip = chord_lift(attach, HPoint(attach.x, attach.y - drop, 0.0), 1.0)
    mid = chord_lift(attach, tip, 0.5)
    spur = TargetPath((attach, mid, tip))
    gamma = splice_path(base, col, _spliced_vertices(spur))
    n = len(gamma.vertices) - 1

    seq = MoveSequence(
        (Move(kind="remove_backtrack", column=col, spur=spur),),
        seed=seed,
        cols=n,
        rows_per_move=3,
    )
    truth = 2.0 * leg
    beta, homotopy, _ = compose_moves(space, gamma, seq)
    return InstanceBundle(None, space, gamma, beta, seq, homotopy, truth)


# --------------------------------------------------------------------------- #
# Bundle serialization                                                         #
# --------------------------------------------------------------------------- #


def format_moves(space, seq: MoveSequence) -> str:
    lines = [f"moves {len(seq.moves)} {seq.seed} {seq.cols} {seq.rows_per_move}"]
    for mv in seq.moves:
        if mv.kind == "reparametrize":
            lines.append(f"move reparametrize {len(mv.profile)}")
            for t in mv.profile:
                lines.append(f"{t:.17g}")
        else:
            lines.append(f"move {mv.kind} {mv.column} {len(mv.spur.vertices)}")
            for v in mv.spur.vertices:
                lines.append(space.format_point(v))
    return "\n".join(lines) + "\n"


def parse_moves(space, text: str) -> MoveSequence:
    lines = [ln for ln in (raw.strip() for raw in text.splitlines()) if ln]
    if not lines:
        raise InputError("empty moves file")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "moves":
        raise InputError(f"bad moves header: {lines[0]!r}")
    try:
        count, seed, cols, rows = (int(x) for x in head[1:])
    except ValueError as exc:
        raise InputError(f"bad moves header: {lines[0]!r}") from exc
    moves = []
    i = 1
    for _ in range(count):
        if i >= len(lines):
            raise InputError("truncated moves file")
        tokens = lines[i].split()
        if len(tokens) < 3 or tokens[0] != "move":
            raise InputError(f"line {i + 1}: expected a move record")
        kind = tokens[1]
        i += 1
        if kind == "reparametrize":
            k = int(tokens[2])
            if i + k > len(lines):
                raise InputError("truncated reparametrize profile")
            values = tuple(float(lines[i + j]) for j in range(k))
            i += k
            moves.append(Move(kind=kind, profile=values))
        elif kind in ("insert_backtrack", "remove_backtrack", "concat_null_loop"):
            if len(tokens) != 4:
                raise InputError(f"line {i}: expected 'move {kind} <column> <count>'")
            column = int(tokens[2])
            k = int(tokens[3])
            if i + k > len(lines):
                raise InputError("truncated spur vertices")
            verts = tuple(space.parse_point(lines[i + j].split()) for j in range(k))
            i += k
            moves.append(Move(kind=kind, column=column, spur=TargetPath(verts)))
        else:
            raise InputError(f"unknown move kind {kind!r}")
    return MoveSequence(tuple(moves), seed=seed, cols=cols, rows_per_move=rows)
