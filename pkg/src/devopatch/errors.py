"""Exception types shared by the attack engine, oracles, and harness."""


class DimensionMismatch(ValueError):
    """Inputs whose channel/height/width layout does not line up."""


class ConfigError(ValueError):
    """Invalid configuration value; the message names the offending key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


class InitializationFailure(RuntimeError):
    """A population slot could not be filled within the attempt cap, or a
    precondition check (source/target classification) did not hold."""

    def __init__(self, message: str, setup_queries: int = 0, queries_used: int = 0):
        super().__init__(message)
        self.setup_queries = setup_queries
        self.queries_used = queries_used


class OracleFailure(RuntimeError):
    """Transport or protocol failure while consulting a remote oracle.

    ``kind`` is one of: timeout, connect, transport, status, malformed,
    spawn, eof, parse. When raised out of a running attack, ``trace``
    carries the partial per-query history collected up to the failure.
    """

    def __init__(self, kind: str, message: str, status: int | None = None):
        super().__init__(f"{kind}: {message}")
        self.kind = kind
        self.status = status
        self.trace = None
