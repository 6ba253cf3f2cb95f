"""Exception types shared across the toolkit.

The CLI maps these onto exit codes, so library code should raise the most
specific class that applies: DataError for anything wrong with input files or
record contents, EndpointError for inference endpoint trouble.
"""


class DataError(ValueError):
    """Input data violates the schema or an invariant."""


class EndpointError(RuntimeError):
    """The inference endpoint failed, timed out, or answered out of contract."""
