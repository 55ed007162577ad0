"""Exception hierarchy shared across the package."""


class CDIError(Exception):
    """Base class for every error raised by this package."""


class GraphError(CDIError, ValueError):
    """Invalid graph construction, unknown label, or label-set mismatch."""


class DocumentError(CDIError, ValueError):
    """Malformed on-disk document (graph, cuts, constraints, outcome space)."""


class PropositionError(CDIError, ValueError):
    pass


class ResponseParseError(CDIError, ValueError):
    """The model response did not contain a usable edge list.

    The raw response text is kept on ``raw`` for diagnostics.
    """

    def __init__(self, message: str, raw: str | None = None):
        super().__init__(message)
        self.raw = raw


class BackendError(CDIError):
    """The chat backend failed after exhausting retries."""

    def __init__(self, message: str, raw: str | None = None):
        super().__init__(message)
        self.raw = raw


class CassetteMiss(BackendError):
    pass


class AllSamplesFailed(CDIError):
    def __init__(self, failures):
        super().__init__(f"all {len(failures)} samples failed")
        self.failures = failures


class ConstraintError(CDIError, ValueError):
    """Unsatisfiable or inconsistent constraints, or a cut that violates them."""


class SolverLimitError(CDIError, ValueError):
    pass


class SpectrumError(CDIError, ValueError):
    """Invalid energy spectrum or Gibbs calibration precondition."""


class NoGapError(SpectrumError):
    pass


class OutcomeError(CDIError, ValueError):
    pass
