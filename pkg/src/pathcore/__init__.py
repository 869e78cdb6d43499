"""Length-minimizing representatives of path homotopy classes, computed by
factoring discrete homotopies through metric trees."""

from .config import DEFAULT, Tolerances
from .core import (
    CoreResult,
    ShorteningResult,
    arc_length_reparametrize,
    compare_cores,
    local_loop_triviality,
    minimize,
    shorten,
)
from .errors import (
    CertificateError,
    ConvergenceError,
    InputError,
    NotTreeLike,
    PathcoreError,
    QuotientInconsistent,
    ReconstructionError,
)
from .factorization import (
    Factorization,
    GridHomotopy,
    edge_weights,
    pseudo_metric,
    quotient_tree,
    validate_factorization,
)
from .heisenberg import (
    HPoint,
    HorizontalPath,
    cc_distance,
    cc_length,
    group_inv,
    group_mul,
    lift,
)
from .instances import (
    InstanceBundle,
    Move,
    MoveSequence,
    insert_backtrack,
    random_instance,
    reparametrize,
)
from .metric_tree import (
    MetricTree,
    TreeGeodesic,
    TreePoint,
    diameter,
    four_point_check,
    geodesic_eval,
    tree_distance,
    tree_from_metric,
    tree_geodesic,
)
from .targets import (
    HeisenbergTarget,
    TargetPath,
    TreeTarget,
    discrete_lipschitz,
    path_length,
)

__all__ = [name for name in dir() if not name.startswith("_")]
