"""Exception hierarchy.  ``exit_code`` mirrors the CLI contract:
1 input error, 2 quotient/tree failures, 3 numeric non-convergence."""


class PathcoreError(Exception):
    exit_code = 1


class InputError(PathcoreError):
    """Malformed input: bad file, bad identifier, violated precondition."""

    exit_code = 1


class NotTreeLike(PathcoreError):
    """A distance table failed tree-metric validation.

    Carries the worst witness quadruple of indices and its four-point excess.
    """

    exit_code = 2

    def __init__(self, message, witness=None, violation=0.0):
        super().__init__(message)
        self.witness = tuple(witness) if witness is not None else None
        self.violation = float(violation)


class ReconstructionError(NotTreeLike):
    """Tree reconstruction from a distance table drifted beyond tolerance."""


class QuotientInconsistent(PathcoreError):
    """Two grid vertices in one collapse class map to distinct target points."""

    exit_code = 2


class CertificateError(PathcoreError):
    """A certified inequality failed beyond tolerance.

    Carries the offending check name and the violating pair, when known.
    """

    exit_code = 2

    def __init__(self, message, check=None, pair=None, slack=None):
        super().__init__(message)
        self.check = check
        self.pair = pair
        self.slack = slack


class ConvergenceError(PathcoreError):
    """An iterative solver hit its cap.  Carries the last bracketing data."""

    exit_code = 3

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket
