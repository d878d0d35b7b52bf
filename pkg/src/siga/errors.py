"""Exception taxonomy shared by every module in the package.

Each class marks one failure mode; callers are expected to catch the
specific class, not a broad base, so nothing here derives from anything
more specific than Exception.
"""


class SigaError(Exception):
    """Base class so `except SigaError` can fence the whole package."""


class ShapeError(SigaError):
    """Non-conformable operands. Message must name both shapes."""


class NumericError(SigaError):
    """NaN/Inf where finiteness is required, or a divergent loss."""


class ContractError(SigaError):
    """An API precondition was violated by the caller."""


class ConfigError(SigaError):
    """Bad or inconsistent configuration value."""


class ParseError(SigaError):
    """Malformed text input (configs, manifests). Message carries a line number."""


class DegenerateImage(SigaError):
    """Image has no usable two-cluster intensity structure."""


class FormatError(SigaError):
    """Malformed binary input. Message carries a byte offset."""
