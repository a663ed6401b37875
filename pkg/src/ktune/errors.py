"""Exception hierarchy shared across the framework."""


class KtuneError(Exception):
    """Base class for all framework errors."""


class ExprError(KtuneError):
    """Base class for constraint-expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at offset {pos})")
        self.pos = pos


class ExprTypeError(ExprError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at offset {pos})")
        self.pos = pos


class ExprEvalError(ExprError):
    """Runtime evaluation failure: division/modulo by zero, bad operand type,
    unknown name. Always a defined, catchable error."""


class SpaceParseError(KtuneError):
    """Malformed space document. `where` locates the offending element."""

    def __init__(self, message: str, where: str = ""):
        self.where = where
        self.message = message
        super().__init__(f"{where}: {message}" if where else message)


class ConfigStructureError(KtuneError):
    """Config does not assign exactly the parameters of its space."""


class EnumerationError(KtuneError):
    """Constraint evaluation failed while enumerating or validating."""


class ProfileError(KtuneError):
    """Malformed or inconsistent synthetic cost profile."""


class ProtocolError(KtuneError):
    """The runner violated the wire protocol."""


class VersionMismatchError(ProtocolError):
    def __init__(self, ours: int, theirs: object):
        super().__init__(
            f"protocol version mismatch: framework speaks {ours}, "
            f"runner speaks {theirs!r}"
        )
        self.ours = ours
        self.theirs = theirs


class SearchAborted(KtuneError):
    """Too many non-transient evaluator failures to continue."""


class CacheError(KtuneError):
    """Cache store problem other than a plain miss."""


class CacheVersionError(CacheError):
    def __init__(self, found: object, supported: int):
        super().__init__(
            f"unsupported format_version {found!r} (this framework supports {supported})"
        )
        self.found = found
        self.supported = supported


class CacheLockTimeout(CacheError):
    """Could not acquire the store's writer lock."""


class ReportError(KtuneError):
    """Invalid input to a report operation."""
