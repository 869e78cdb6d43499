"""Uniform interface over target metric spaces.

Two backends: points of a finite metric tree, and the Heisenberg group.
Paths are vertex sequences with uniform parameter spacing; the realized
path concatenates canonical segments (tree geodesics / lifted chords).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .config import DEFAULT
from .errors import InputError
from .heisenberg import (
    HPoint,
    cc_distance,
    chord_lift,
    planar_distance,
)
from .metric_tree import (
    MetricTree,
    TreePoint,
    geodesic_eval,
    tree_distance,
    tree_geodesic,
)


class TreeTarget:
    """A finite metric tree as target space; segments are geodesics, so
    segment length equals distance."""

    tag = "tree"

    def __init__(self, tree: MetricTree):
        self.tree = tree

    def distance(self, p: TreePoint, q: TreePoint) -> float:
        return tree_distance(self.tree, p, q)

    def segment_length(self, p: TreePoint, q: TreePoint) -> float:
        return tree_distance(self.tree, p, q)

    def interpolate(self, p: TreePoint, q: TreePoint, t: float) -> TreePoint:
        if p == q:
            return p
        return geodesic_eval(tree_geodesic(self.tree, p, q), t)

    def segment_to_point(self, a: TreePoint, b: TreePoint, p: TreePoint) -> float:
        """Distance from ``p`` to the arc between a and b (Gromov product)."""
        dpa = self.distance(p, a)
        dpb = self.distance(p, b)
        dab = self.distance(a, b)
        return max(0.0, 0.5 * (dpa + dpb - dab))

    def format_point(self, p: TreePoint) -> str:
        return self.tree.format_point(p)

    def parse_point(self, tokens) -> TreePoint:
        return self.tree.parse_point(tokens)


class HeisenbergTarget:
    """The Heisenberg group as target space.

    The canonical segment between two points is the lifted straight planar
    chord; its length (the planar chord length) upper-bounds the CC
    distance and coincides with it exactly on horizontally compatible,
    collinear pairs.
    """

    tag = "h1"

    def __init__(self, cc_tol: float = DEFAULT.cc_tol):
        self.cc_tol = cc_tol

    def distance(self, p: HPoint, q: HPoint) -> float:
        return cc_distance(p, q, tol=self.cc_tol)

    def segment_length(self, p: HPoint, q: HPoint) -> float:
        return planar_distance(p, q)

    def interpolate(self, p: HPoint, q: HPoint, t: float) -> HPoint:
        if p == q:
            return p
        return chord_lift(p, q, t)

    def segment_to_point(self, a: HPoint, b: HPoint, p: HPoint) -> float:
        """Distance from ``p`` to the lifted chord a -> b."""
        dx, dy = b.x - a.x, b.y - a.y
        span = dx * dx + dy * dy
        if span == 0.0:
            t = 0.0
        else:
            t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / span
            t = min(max(t, 0.0), 1.0)
        foot = self.interpolate(a, b, t)
        if foot.x == p.x and foot.y == p.y and foot.z == p.z:
            return 0.0
        return self.distance(foot, p)

    def format_point(self, p: HPoint) -> str:
        return f"{p.x:.17g} {p.y:.17g} {p.z:.17g}"

    def parse_point(self, tokens) -> HPoint:
        if len(tokens) != 3:
            raise InputError(f"expected '<x> <y> <z>', got {tokens!r}")
        try:
            return HPoint(float(tokens[0]), float(tokens[1]), float(tokens[2]))
        except ValueError as exc:
            raise InputError(f"bad point {tokens!r}") from exc


@dataclass(frozen=True)
class TargetPath:
    """A path as a vertex sequence with uniform parameter spacing."""

    vertices: tuple

    def __post_init__(self):
        if not self.vertices:
            raise InputError("a path needs at least one vertex")

    def __len__(self):
        return len(self.vertices)

    @property
    def start(self):
        return self.vertices[0]

    @property
    def end(self):
        return self.vertices[-1]


def path_length(space, p: TargetPath) -> float:
    """Sum of canonical segment lengths over consecutive vertices."""
    verts = p.vertices
    return sum(space.segment_length(a, b) for a, b in zip(verts, verts[1:]))


def discrete_lipschitz(space, samples, spacing: float) -> float:
    """Max over consecutive samples of distance / spacing."""
    if spacing <= 0:
        raise InputError(f"spacing must be positive, got {spacing}")
    samples = list(samples)
    if len(samples) < 2:
        return 0.0
    return max(
        space.distance(a, b) for a, b in zip(samples, samples[1:])
    ) / spacing


def path_eval(space, p: TargetPath, t: float):
    """Point at parameter ``t`` in [0, 1], interpolating proportionally
    within the segment that contains it."""
    if not (-1e-12 <= t <= 1.0 + 1e-12):
        raise InputError(f"path parameter {t} outside [0, 1]")
    t = min(max(t, 0.0), 1.0)
    n = len(p.vertices) - 1
    if n == 0:
        return p.vertices[0]
    scaled = t * n
    j = min(int(math.floor(scaled)), n - 1)
    frac = scaled - j
    if frac <= 0.0:
        return p.vertices[j]
    if frac >= 1.0:
        return p.vertices[j + 1]
    return space.interpolate(p.vertices[j], p.vertices[j + 1], frac)


def sample_path(space, p: TargetPath, n: int) -> TargetPath:
    """Resample at n+1 uniform parameters.  A no-op when p already has
    n+1 vertices at those parameters."""
    if n < 1:
        raise InputError(f"need at least one segment, got n={n}")
    if len(p.vertices) == n + 1:
        return p
    return TargetPath(tuple(path_eval(space, p, k / n) for k in range(n + 1)))


def reverse_path(p: TargetPath) -> TargetPath:
    return TargetPath(tuple(reversed(p.vertices)))


def prefix_path(space, p: TargetPath, fraction: float) -> TargetPath:
    """The sub-path over parameters [0, fraction], resampled to keep the
    original vertex count (so retraction schedules shrink smoothly)."""
    if not (0.0 <= fraction <= 1.0):
        raise InputError(f"fraction {fraction} outside [0, 1]")
    n = len(p.vertices) - 1
    if n == 0 or fraction == 1.0:
        return p
    return TargetPath(
        tuple(path_eval(space, p, fraction * k / n) for k in range(n + 1))
    )


def splice_path(p: TargetPath, at: int, insert) -> TargetPath:
    """Insert the vertex sequence ``insert`` after vertex ``at``."""
    verts = p.vertices
    if not 0 <= at < len(verts):
        raise InputError(f"splice column {at} outside path of {len(verts)} vertices")
    return TargetPath(verts[: at + 1] + tuple(insert) + verts[at + 1 :])


def points_equal(space, a, b, tol: float = DEFAULT.eps_num) -> bool:
    if a == b:
        return True
    return space.distance(a, b) <= tol


def point_to_path(space, point, p: TargetPath):
    """Distance from ``point`` to the realized path, with the index of the
    nearest segment.  Exact on tree targets."""
    verts = p.vertices
    if len(verts) == 1:
        return space.distance(point, verts[0]), 0
    best = math.inf
    best_seg = 0
    for j, (a, b) in enumerate(zip(verts, verts[1:])):
        d = space.segment_to_point(a, b, point)
        if d < best:
            best = d
            best_seg = j
            if best == 0.0:
                break
    return best, best_seg


def format_target_path(space, p: TargetPath) -> str:
    lines = [f"tpath {len(p.vertices)} {space.tag}"]
    for v in p.vertices:
        lines.append(space.format_point(v))
    return "\n".join(lines) + "\n"


def parse_target_path(space, text: str) -> TargetPath:
    lines = [ln for ln in (raw.strip() for raw in text.splitlines()) if ln]
    if not lines:
        raise InputError("empty path file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "tpath":
        raise InputError(f"bad tpath header: {lines[0]!r}")
    try:
        n = int(head[1])
    except ValueError as exc:
        raise InputError(f"bad tpath header: {lines[0]!r}") from exc
    if head[2] != space.tag:
        raise InputError(f"path targets {head[2]!r}, expected {space.tag!r}")
    if len(lines) - 1 != n:
        raise InputError(f"header declares {n} vertices, file has {len(lines) - 1}")
    verts = []
    for lineno, ln in enumerate(lines[1:], start=2):
        try:
            verts.append(space.parse_point(ln.split()))
        except InputError as exc:
            raise InputError(f"line {lineno}: {exc}") from exc
    return TargetPath(tuple(verts))
