"""The first Heisenberg group in exponential coordinates.

Group law twists the z coordinate by half the planar cross term, so the
z gain of a horizontal lift equals the signed shoelace area swept by the
planar projection.  Path length in the Carnot-Caratheodory metric equals
the Euclidean length of the planar projection; the point-to-point CC
distance is computed numerically from the circular-arc geodesic family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

from .config import DEFAULT
from .errors import ConvergenceError, InputError


@dataclass(frozen=True)
class HPoint:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise InputError(f"non-finite coordinates ({self.x}, {self.y}, {self.z})")


IDENTITY = HPoint(0.0, 0.0, 0.0)


def group_mul(p: HPoint, q: HPoint) -> HPoint:
    return HPoint(
        p.x + q.x,
        p.y + q.y,
        p.z + q.z + 0.5 * (p.x * q.y - p.y * q.x),
    )


def group_inv(p: HPoint) -> HPoint:
    return HPoint(-p.x, -p.y, -p.z)


def dilate(p: HPoint, lam: float) -> HPoint:
    """Anisotropic dilation (x, y, z) -> (lam x, lam y, lam^2 z)."""
    return HPoint(lam * p.x, lam * p.y, lam * lam * p.z)


@dataclass(frozen=True)
class HorizontalPath:
    """Horizontal lift of a planar polyline.

    z values are derived, never stored: along each straight planar segment
    the lift gains ``(x_k * y_{k+1} - y_k * x_{k+1}) / 2``, so a closed
    polyline gains exactly its signed shoelace area.
    """

    planar_vertices: tuple[tuple[float, float], ...]
    base_z: float = 0.0

    def __post_init__(self):
        if not self.planar_vertices:
            raise InputError("a horizontal path needs at least one vertex")
        for x, y in self.planar_vertices:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise InputError(f"non-finite planar vertex ({x}, {y})")
        if not math.isfinite(self.base_z):
            raise InputError(f"non-finite base z {self.base_z}")

    @cached_property
    def z_values(self) -> tuple[float, ...]:
        zs = [self.base_z]
        verts = self.planar_vertices
        for (x0, y0), (x1, y1) in zip(verts, verts[1:]):
            zs.append(zs[-1] + 0.5 * (x0 * y1 - y0 * x1))
        return tuple(zs)

    def point(self, k: int) -> HPoint:
        x, y = self.planar_vertices[k]
        return HPoint(x, y, self.z_values[k])

    def points(self) -> tuple[HPoint, ...]:
        return tuple(self.point(k) for k in range(len(self.planar_vertices)))


def lift(planar, base_z: float = 0.0) -> HorizontalPath:
    """Horizontal lift of a planar polyline starting at height ``base_z``."""
    return HorizontalPath(tuple((float(x), float(y)) for x, y in planar), float(base_z))


def cc_length(path: HorizontalPath) -> float:
    """CC length of a horizontal path = Euclidean length of its projection."""
    verts = path.planar_vertices
    return sum(
        math.hypot(x1 - x0, y1 - y0) for (x0, y0), (x1, y1) in zip(verts, verts[1:])
    )


def chord_lift(p: HPoint, q: HPoint, t: float) -> HPoint:
    """Point at planar fraction ``t`` along the lifted straight chord from p
    toward q's planar position.  Ends at q exactly when the pair is
    horizontally compatible."""
    x = p.x + t * (q.x - p.x)
    y = p.y + t * (q.y - p.y)
    z = p.z + 0.5 * (p.x * y - p.y * x)
    return HPoint(x, y, z)


def planar_distance(p: HPoint, q: HPoint) -> float:
    return math.hypot(q.x - p.x, q.y - p.y)


def _segment_area(phi: float, chord: float) -> float:
    """Area between a circular arc of half-angle ``phi`` and its chord."""
    s = math.sin(phi)
    radius = chord / (2.0 * s)
    return radius * radius * (phi - math.sin(phi) * math.cos(phi))


def _arc_length(phi: float, chord: float) -> float:
    return chord * phi / math.sin(phi)


def cc_distance(
    p: HPoint,
    q: HPoint,
    tol: float = DEFAULT.cc_tol,
    max_iter: int = DEFAULT.cc_max_iter,
) -> float:
    """Carnot-Caratheodory distance, accurate to ``tol``.

    Left-translate q by p^{-1}; the minimizing horizontal curve projects to
    a circular arc from the origin to the translated planar point whose
    bay area closes the z gap.  Bisection over the arc half-angle; straight
    chord when the z gap vanishes, isoperimetric circle when the planar
    displacement vanishes.
    """
    if tol <= 0:
        raise InputError(f"tolerance must be positive, got {tol}")
    v = group_mul(group_inv(p), q)
    chord = math.hypot(v.x, v.y)
    gap = abs(v.z)
    if gap == 0.0:
        return chord
    if chord == 0.0:
        # closed loop: minimal perimeter enclosing the required area
        return math.sqrt(4.0 * math.pi * gap)

    # expand the half-angle bracket until the segment area covers the gap
    lo = 0.0
    hi = math.pi / 2.0
    grew = 0
    while _segment_area(hi, chord) < gap:
        lo = hi
        hi = 0.5 * (hi + math.pi)
        grew += 1
        if grew > max_iter:
            raise ConvergenceError(
                "arc-area bracket failed to cover the z gap",
                bracket=(lo, hi),
            )

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if _segment_area(mid, chord) < gap:
            lo = mid
        else:
            hi = mid
        if hi < math.pi and lo > 0.0:
            if _arc_length(hi, chord) - _arc_length(max(lo, 1e-300), chord) <= tol * 0.5:
                break
    else:
        raise ConvergenceError(
            "arc bisection failed to reach tolerance", bracket=(lo, hi)
        )
    phi = 0.5 * (lo + hi)
    if phi == 0.0:
        return chord
    return _arc_length(phi, chord)


# --------------------------------------------------------------------------- #
# Serialization                                                                #
# --------------------------------------------------------------------------- #


def format_hpath(path: HorizontalPath) -> str:
    lines = [f"hpath {len(path.planar_vertices)} {path.base_z:.17g}"]
    for x, y in path.planar_vertices:
        lines.append(f"{x:.17g} {y:.17g}")
    return "\n".join(lines) + "\n"


def parse_hpath(text: str) -> HorizontalPath:
    lines = [ln for ln in (raw.strip() for raw in text.splitlines()) if ln]
    if not lines:
        raise InputError("empty path file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "hpath":
        raise InputError(f"bad hpath header: {lines[0]!r}")
    try:
        n = int(head[1])
        base_z = float(head[2])
    except ValueError as exc:
        raise InputError(f"bad hpath header: {lines[0]!r}") from exc
    if len(lines) - 1 != n:
        raise InputError(f"header declares {n} vertices, file has {len(lines) - 1}")
    verts = []
    for lineno, ln in enumerate(lines[1:], start=2):
        tokens = ln.split()
        if len(tokens) != 2:
            raise InputError(f"line {lineno}: expected '<x> <y>'")
        try:
            verts.append((float(tokens[0]), float(tokens[1])))
        except ValueError as exc:
            raise InputError(f"line {lineno}: bad coordinates") from exc
    return HorizontalPath(tuple(verts), base_z)
