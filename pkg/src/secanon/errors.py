"""Exception hierarchy shared across the package."""


class SecanonError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SecanonError):
    """Invalid configuration, schema or input file."""


class ParseError(ConfigError):
    def __init__(self, message, row=None, col=None):
        self.row = row
        self.col = col
        where = ""
        if row is not None:
            where = f" (row {row}" + (f", column {col!r})" if col is not None else ")")
        super().__init__(message + where)


class UnknownCategoryValue(ConfigError):
    pass


class ProtocolError(SecanonError):
    """Failure inside a cryptographic or two-party protocol step."""

    step_tag = None

    def with_step(self, step_tag):
        self.step_tag = step_tag
        return self


class UnknownKey(ProtocolError):
    pass


class KeyMismatch(ProtocolError):
    pass


class DepthExceeded(ProtocolError):
    pass


class SizeMismatch(ProtocolError):
    pass


class EmptyInput(ProtocolError):
    pass


class EmptyDictionary(ProtocolError):
    pass


class EmptyCluster(ProtocolError):
    def __init__(self, clusters):
        self.clusters = list(clusters)
        super().__init__(f"empty clusters: {self.clusters}")


class ParameterTooLarge(ProtocolError):
    pass


class Unsatisfiable(SecanonError):
    """k-anonymity cannot be reached with the rows that remain."""
