"""Numeric tolerances and iteration limits shared across the package."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    """Every tolerance the pipeline uses, in one place.

    eps_num      -- arithmetic comparison tolerance; certificates must hold
                    with slack >= -eps_num.
    collapse_tol -- grid vertices at pseudo-distance <= collapse_tol merge
                    into one class (modeling tolerance, deliberately looser
                    than eps_num).
    tree_tol     -- largest four-point excess still accepted as a tree metric.
    tol_unique   -- core comparison tolerance across independent pipelines.
    cc_tol       -- target accuracy of the Carnot-Caratheodory distance solver.
    min_edge     -- tree edge lengths below this are rejected at construction.
    """

    eps_num: float = 1e-9
    collapse_tol: float = 1e-7
    tree_tol: float = 1e-9
    tol_unique: float = 1e-6
    cc_tol: float = 1e-8
    cc_max_iter: int = 200
    minimize_cap: int = 32
    min_edge: float = 1e-9


DEFAULT = Tolerances()
