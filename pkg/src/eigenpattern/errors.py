"""Exception hierarchy shared by all modules.

Each family maps to one CLI exit code (see ``eigenpattern.cli``).
"""


class EigenpatternError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(EigenpatternError, ValueError):
    """Bad configuration or arguments, detected before any work is done."""


class DimensionError(ValidationError):
    """Shapes or ranks that do not fit together."""


class InputError(ValidationError):
    """Data that violates a value invariant (non-finite entries, bad ranges)."""


class IngestionError(EigenpatternError):
    """A manifest row or image file could not be turned into a dataset entry."""


class NumericalError(EigenpatternError, ArithmeticError):
    """A numerical procedure cannot produce a meaningful result."""


class DegenerateSpectrumError(NumericalError):
    pass


class DegenerateFeatureError(NumericalError):
    pass


class UndefinedRecallError(NumericalError):
    pass


class MissingCellError(ValidationError):
    def __init__(self, missing):
        self.missing = list(missing)
        coords = ", ".join(f"(velocity={v:g}, tonal_value={t:g})" for v, t in self.missing)
        super().__init__(f"regime map has {len(self.missing)} empty cell(s): {coords}")


class ModelFileError(EigenpatternError, IOError):
    """Base for model persistence failures."""


class ModelFormatError(ModelFileError):
    pass


class ModelVersionError(ModelFileError):
    pass


class TruncatedModelError(ModelFileError):
    pass
