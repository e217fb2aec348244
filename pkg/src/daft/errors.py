"""Exception hierarchy for the daft package.

Every error raised by the library derives from DaftError so callers can
catch one type at the CLI boundary and map it to an exit code.
"""


class DaftError(Exception):
    """Base class for all library errors."""


class ConfigError(DaftError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class DuplicateClassId(ConfigError):
    pass


class DuplicateAttribute(ConfigError):
    pass


class UnknownClass(DaftError):
    pass


class IndexOutOfRange(DaftError):
    pass


class ShapeMismatch(DaftError):
    pass


class PlacementFailed(DaftError):
    """Rejection sampling could not place objects without overlap."""


class NonFiniteAction(DaftError):
    pass


class IoError(DaftError):
    """File missing, unreadable, or malformed."""


class WrongDatasetKind(DaftError):
    """A stage was fed a dataset of the wrong arity (single vs multi)."""


class Diverged(DaftError):
    """Training loss became non-finite."""


class TemplatesNotFrozen(DaftError):
    """A frozen-template stage produced gradients on template gates."""


class TooFewObjects(DaftError):
    pass


class MissingModel(DaftError):
    pass


class MissingPrerequisite(ConfigError):
    """A pipeline stage was requested before its prerequisite checkpoint exists."""


class MissingCheckpoint(DaftError):
    pass
