"""Privacy-preserving publishing of encrypted tables between two non-colluding parties."""
from .errors import (
    ConfigError, DepthExceeded, EmptyCluster, EmptyDictionary, EmptyInput, KeyMismatch, ParameterTooLarge,
    ParseError, ProtocolError, SecanonError, SizeMismatch, UnknownCategoryValue, UnknownKey, Unsatisfiable,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DepthExceeded", "EmptyCluster", "EmptyDictionary", "EmptyInput", "KeyMismatch",
    "ParameterTooLarge", "ParseError", "ProtocolError", "SecanonError", "SizeMismatch",
    "UnknownCategoryValue", "UnknownKey", "Unsatisfiable", "__version__",
]
