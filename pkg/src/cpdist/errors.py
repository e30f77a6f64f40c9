"""Exception types shared across the package.

Two broad families matter to callers (and to the CLI exit codes):
``InputError`` for malformed or topologically unusable input, and
``NumericalError`` for solver or flow failures on valid input.
"""


class CpdistError(Exception):
    """Base class for all package-specific errors."""


class InputError(CpdistError):
    """Invalid input data (parse failures, bad topology, bad arguments)."""


class MeshFormatError(InputError):
    """The mesh file could not be parsed in the declared format."""


class TopologyError(InputError):
    """The mesh is not a manifold disk (wrong Euler characteristic,
    several boundary loops, non-manifold edges or vertices, ...)."""


class NumericalError(CpdistError):
    """A numerical procedure failed on otherwise valid input."""


class FlatteningError(NumericalError):
    """Disk flattening failed (singular system or flipped faces)."""


class TPSFitError(NumericalError):
    """Thin-plate-spline fit failed (coincident or ill-conditioned controls)."""


class FlowError(NumericalError):
    """Density-equalizing flow failed (flipped elements after retries)."""
