"""Exception hierarchy for the rdad package."""


class RDADError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateDistance(RDADError, ValueError):
    """A k-th nearest-neighbor distance of zero made a density estimate infinite."""


class DuplicateOverload(RDADError, ValueError):
    """At least ``k_den`` coincident copies of a sample point.

    The density estimate at such a point is infinite. Deduplicate or jitter the
    input before building a density profile.
    """


class CloudMismatch(RDADError, ValueError):
    """A density profile was used with an index built on a different cloud."""


class GridError(RDADError, ValueError):
    """A grid could not be derived from the data."""
