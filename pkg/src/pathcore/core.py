"""Shorten a path within its homotopy class and iterate to the length
minimizer.

Given a factorization of a homotopy from gamma to beta, the shortened path
follows the tree geodesic between the endpoint classes, realized back in
the target.  Column-wise fiber geodesics from the row-0 classes to the
geodesic assemble a new homotopy whose Lipschitz constant is bounded by
gamma's.  Iterating reaches a fixed point: the core of the class.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import DEFAULT
from .errors import CertificateError, ConvergenceError, InputError
from .factorization import (
    Factorization,
    GridHomotopy,
    quotient_tree,
    stack_homotopies,
)
from .metric_tree import geodesic_eval, tree_distance, tree_geodesic
from .targets import (
    TargetPath,
    path_length,
    point_to_path,
    sample_path,
)


@dataclass(frozen=True)
class ShorteningResult:
    """Shortened path, its homotopy from gamma, and the certified bounds.

    Invariants (each checked at construction, slack >= -eps):
      * length(beta_prime) <= length(beta)
      * lip(beta_prime) <= lip(gamma)
      * lip(h_prime) <= lip(gamma)
      * every beta_prime vertex lies on the realized row-0 path
        (image_witness maps each vertex to its nearest row-0 segment and
        the achieved distance).
    """

    beta_prime: TargetPath
    h_prime: GridHomotopy
    lip_beta_prime: float
    lip_h_prime: float
    length_beta: float
    length_beta_prime: float
    image_witness: tuple
    lip_gamma: float
    lip_fiber_map: float


@dataclass(frozen=True)
class CoreResult:
    """Arc-length parametrized length minimizer with its provenance."""

    core: TargetPath
    ell_min: float
    iterations: int
    homotopy_chain: tuple


def _row0_subtree_edges(f: Factorization, n: int):
    """Edge set of the subtree spanned by the row-0 classes."""
    tree = f.tree
    row0 = {f.psi_nodes[0][j] for j in range(n + 1)}
    root = next(iter(row0))
    marked_nodes = {root}
    marked_edges = set()
    for node in row0:
        path = tree.node_path(root, node)
        # walk from `node` back toward root, stopping at the marked region
        for x, eid in reversed(path[1:]):
            if x in marked_nodes and eid in marked_edges:
                continue
            marked_edges.add(eid)
            marked_nodes.add(x)
        marked_nodes.add(node)
    # node_path lists edges walking root -> node; ensure both endpoints marked
    for eid in marked_edges:
        u, v, _ = tree.edges[eid]
        marked_nodes.add(u)
        marked_nodes.add(v)
    return marked_nodes, marked_edges


def shorten(
    f: Factorization,
    h: GridHomotopy,
    eps: float = DEFAULT.eps_num,
) -> ShorteningResult:
    """One shortening pass through the quotient tree.

    The new path samples the realization of the tree geodesic between the
    endpoint classes at n+1 uniform parameters; the new homotopy realizes
    the fiber geodesics from each row-0 class to the corresponding geodesic
    point, sampled at the grid resolution.
    """
    space = f.space
    m, n = h.rows, h.cols
    tree = f.tree

    start = f.psi(0, 0)
    end = f.psi(0, n)
    eta = tree_geodesic(tree, start, end)

    eta_points = [geodesic_eval(eta, j / n) for j in range(n + 1)]
    beta_prime = TargetPath(tuple(f.phi_point(x) for x in eta_points))

    fibers = [tree_geodesic(tree, f.psi(0, j), eta_points[j]) for j in range(n + 1)]
    fiber_grid = [
        [geodesic_eval(fibers[j], s / m) for j in range(n + 1)] for s in range(m + 1)
    ]
    h_rows = tuple(
        tuple(f.phi_point(fiber_grid[s][j]) for j in range(n + 1))
        for s in range(m + 1)
    )
    h_prime = GridHomotopy(m, n, h_rows, h.target_tag)

    # certificates -----------------------------------------------------------
    gamma = h.row_path(0)
    beta = h.row_path(m)
    length_beta = path_length(space, beta)
    length_beta_prime = path_length(space, beta_prime)
    lip_gamma = f.lip_gamma

    lip_beta_prime = (
        max(
            space.distance(a, b)
            for a, b in zip(beta_prime.vertices, beta_prime.vertices[1:])
        )
        * n
        if n >= 1
        else 0.0
    )

    lip_h_prime = 0.0
    for s in range(m + 1):
        row = h_rows[s]
        lip_h_prime = max(
            lip_h_prime,
            max(space.distance(row[j], row[j + 1]) for j in range(n)) * n,
        )
    for s in range(m):
        row, nxt = h_rows[s], h_rows[s + 1]
        lip_h_prime = max(
            lip_h_prime,
            max(space.distance(row[j], nxt[j]) for j in range(n + 1)) * m,
        )

    # the fiber-geodesic map into the tree is Lipschitz with gamma's constant
    lip_fiber = 0.0
    for s in range(m + 1):
        for j in range(n):
            d = tree_distance(tree, fiber_grid[s][j], fiber_grid[s][j + 1]) * n
            lip_fiber = max(lip_fiber, d)
    for s in range(m):
        for j in range(n + 1):
            d = tree_distance(tree, fiber_grid[s][j], fiber_grid[s + 1][j]) * m
            lip_fiber = max(lip_fiber, d)

    # the fiber map stays inside the subtree spanned by the row-0 classes
    marked_nodes, marked_edges = _row0_subtree_edges(f, n)
    for s in range(m + 1):
        for j in range(n + 1):
            p = fiber_grid[s][j]
            inside = (
                p.node in marked_nodes if p.is_node() else p.edge in marked_edges
            )
            if not inside:
                raise CertificateError(
                    "fiber geodesic left the row-0 subtree",
                    check="fiber_image",
                    pair=(s, j),
                )

    witness = []
    worst_image = 0.0
    for k, v in enumerate(beta_prime.vertices):
        dist, seg = point_to_path(space, v, gamma)
        witness.append((seg, dist))
        worst_image = max(worst_image, dist)

    checks = (
        ("length", length_beta + eps - length_beta_prime),
        ("lip_beta_prime", lip_gamma + eps - lip_beta_prime),
        ("lip_h_prime", lip_gamma + eps - lip_h_prime),
        ("lip_fiber", lip_gamma + eps - lip_fiber),
        ("image", eps - worst_image),
    )
    for name, slack in checks:
        if slack < 0:
            raise CertificateError(
                f"shortening certificate {name} failed (slack {slack:.3e})",
                check=name,
                slack=slack,
            )

    return ShorteningResult(
        beta_prime=beta_prime,
        h_prime=h_prime,
        lip_beta_prime=lip_beta_prime,
        lip_h_prime=lip_h_prime,
        length_beta=length_beta,
        length_beta_prime=length_beta_prime,
        image_witness=tuple(witness),
        lip_gamma=lip_gamma,
        lip_fiber_map=lip_fiber,
    )


def arc_length_reparametrize(space, p: TargetPath, n_out: int) -> TargetPath:
    """Resample at n_out+1 uniform arc-length fractions; length preserved,
    constant paths pass through unchanged."""
    if n_out < 1:
        raise InputError(f"need n_out >= 1, got {n_out}")
    verts = p.vertices
    seg_lengths = [
        space.segment_length(a, b) for a, b in zip(verts, verts[1:])
    ]
    total = sum(seg_lengths)
    if total <= 0.0:
        return TargetPath((verts[0],) * (n_out + 1))
    cumulative = [0.0]
    for L in seg_lengths:
        cumulative.append(cumulative[-1] + L)
    out = []
    j = 0
    for k in range(n_out + 1):
        target = total * k / n_out
        while j < len(seg_lengths) - 1 and cumulative[j + 1] < target - 1e-15:
            j += 1
        span = seg_lengths[j]
        frac = (target - cumulative[j]) / span if span > 0 else 0.0
        frac = min(max(frac, 0.0), 1.0)
        if frac == 0.0:
            out.append(verts[j])
        elif frac == 1.0:
            out.append(verts[j + 1])
        else:
            out.append(space.interpolate(verts[j], verts[j + 1], frac))
    return TargetPath(tuple(out))


def constant_homotopy(space, p: TargetPath, n: int, m: int = 1) -> GridHomotopy:
    """Every row equals p, sampled at n+1 columns."""
    row = sample_path(space, p, n).vertices
    return GridHomotopy(m, n, tuple(row for _ in range(m + 1)), space.tag)


def minimize(
    space,
    gamma: TargetPath,
    moves=None,
    cap: int = DEFAULT.minimize_cap,
    collapse_tol: float = DEFAULT.collapse_tol,
    tree_tol: float = DEFAULT.tree_tol,
    eps: float = DEFAULT.eps_num,
) -> CoreResult:
    """Iterate shortening passes to the length minimizer of the class
    presented by ``gamma`` and the move sequence.

    Composes the move homotopies into one grid, factorizes, shortens, and
    repeats on the emitted homotopy until the length stops decreasing.
    Raises ConvergenceError if the cap is hit before two consecutive
    lengths agree within ``eps``.
    """
    from .instances import MoveSequence, apply_move  # cycle-free at call time

    if cap < 1:
        raise ConvergenceError(f"iteration cap {cap} leaves no iterations")

    if moves is not None and len(moves.moves) > 0:
        n = moves.cols
        homotopies = []
        current = sample_path(space, gamma, n)
        best_seen = path_length(space, current)
        for move in moves.moves:
            current, hom = apply_move(space, current, move, n, moves.rows_per_move)
            homotopies.append(hom)
            best_seen = min(best_seen, path_length(space, current))
        h = stack_homotopies(homotopies)
    else:
        n = max(len(gamma.vertices) - 1, 1)
        h = constant_homotopy(space, gamma, n)
        best_seen = path_length(space, sample_path(space, gamma, n))

    chain = [h]
    lengths = [best_seen]
    result = None
    converged = False
    for _ in range(cap):
        f = quotient_tree(space, h, collapse_tol=collapse_tol, tree_tol=tree_tol, eps=eps)
        result = shorten(f, h, eps=eps)
        lengths.append(result.length_beta_prime)
        chain.append(result.h_prime)
        if abs(lengths[-1] - lengths[-2]) <= eps:
            converged = True
            break
        h = result.h_prime
    if not converged:
        raise ConvergenceError(
            f"minimize did not converge within {cap} iterations",
            bracket=(lengths[-2], lengths[-1]),
        )

    ell_min = min(lengths)
    core = arc_length_reparametrize(space, result.beta_prime, n)
    return CoreResult(
        core=core,
        ell_min=float(ell_min),
        iterations=len(chain) - 1,
        homotopy_chain=tuple(chain),
    )


@dataclass(frozen=True)
class CoreComparison:
    equal_up_to_reparam: bool
    hausdorff: float


def compare_cores(
    space, c1: TargetPath, c2: TargetPath, tol_unique: float = DEFAULT.tol_unique
) -> CoreComparison:
    """Compare two cores after arc-length reparametrization at a common
    resolution; also reports the symmetric max-min vertex distance."""
    if len(c1.vertices) != len(c2.vertices):
        raise InputError("cores must be resampled at the same resolution")
    n = len(c1.vertices) - 1
    a = arc_length_reparametrize(space, c1, max(n, 1))
    b = arc_length_reparametrize(space, c2, max(n, 1))
    matched = max(space.distance(x, y) for x, y in zip(a.vertices, b.vertices))
    hausdorff = 0.0
    for p in a.vertices:
        hausdorff = max(hausdorff, min(space.distance(p, q) for q in b.vertices))
    for q in b.vertices:
        hausdorff = max(hausdorff, min(space.distance(q, p) for p in a.vertices))
    return CoreComparison(matched <= tol_unique, hausdorff)


def local_loop_triviality(
    space,
    base,
    radius: float,
    loop: TargetPath,
    moves=None,
    eps: float = DEFAULT.eps_num,
) -> bool:
    """True iff the loop minimizes to a constant path at its base point.

    Precondition: the loop starts and ends at ``base`` and every vertex
    stays within ``radius`` of it.
    """
    if space.distance(loop.start, base) > eps or space.distance(loop.end, base) > eps:
        raise InputError("loop does not start and end at the base point")
    for k, v in enumerate(loop.vertices):
        if space.distance(v, base) > radius + eps:
            raise InputError(
                f"loop vertex {k} lies outside the ball of radius {radius}"
            )
    result = minimize(space, loop, moves, eps=eps)
    return result.ell_min <= eps


# --------------------------------------------------------------------------- #
# Serialization                                                                #
# --------------------------------------------------------------------------- #


def format_core(space, r: CoreResult) -> str:
    lines = [f"core {len(r.core.vertices) - 1} {r.ell_min:.17g} {r.iterations}"]
    for v in r.core.vertices:
        lines.append(space.format_point(v))
    return "\n".join(lines) + "\n"


def certificate_lines(sr: ShorteningResult):
    """Key-value certificate block, stable order, 17 significant digits."""
    worst_image = max((d for _, d in sr.image_witness), default=0.0)
    return [
        f"length_beta {sr.length_beta:.17g}",
        f"length_beta_prime {sr.length_beta_prime:.17g}",
        f"lip_gamma {sr.lip_gamma:.17g}",
        f"lip_beta_prime {sr.lip_beta_prime:.17g}",
        f"lip_h_prime {sr.lip_h_prime:.17g}",
        f"lip_fiber_map {sr.lip_fiber_map:.17g}",
        f"image_defect {worst_image:.17g}",
    ]
