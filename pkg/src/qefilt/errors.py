"""Exception types shared across the package."""


class QefiltError(Exception):
    """Base class for all qefilt errors."""


class GraphFormatError(QefiltError):
    """Malformed graph file (bad header, unparsable edge line)."""


class GraphValidationError(QefiltError):
    """Structurally invalid graph or shift data (self loop, duplicate edge,
    out-of-range node id, asymmetric matrix, ...)."""


class ConnectivityError(QefiltError):
    """Random geometric generator failed to produce a connected graph."""


class StabilityError(QefiltError):
    """A rational filter branch violates its spectral stability condition."""


class ConvergenceError(QefiltError):
    """An iterative solver hit its iteration cap before reaching tolerance."""


class ScenarioError(QefiltError):
    """Invalid or inconsistent scenario configuration."""
