"""Exception hierarchy.

Everything raised on purpose derives from :class:`PosthocError`.  The CLI maps
:class:`InputError` subclasses to exit code 1 and every other
:class:`PosthocError` to exit code 2.
"""


class PosthocError(ValueError):
    pass


class InputError(PosthocError):
    """Malformed or unreadable input (bad JSON, bad p-value file, bad family)."""


class FamilyError(InputError):
    """A reference family violates its structural invariants."""


class NotAForest(PosthocError):
    def __init__(self, witness=None):
        self.witness = witness
        msg = "family is not a forest"
        if witness is not None:
            msg += f": members {witness[0] + 1} and {witness[1] + 1} overlap without nesting"
        super().__init__(msg)


class HNotInRange(PosthocError):
    pass


class ProblemTooLarge(PosthocError):
    pass


class FamilyTooLargeForEnumeration(PosthocError):
    pass


class MissingZeta(PosthocError):
    pass


class AlphaTooLarge(PosthocError):
    pass


class ConfigError(PosthocError):
    pass


class SNotDividingM(ConfigError):
    pass


class QNotCompatible(ConfigError):
    pass


class MaskRequiredForOracle(PosthocError):
    pass


class DomainError(PosthocError):
    pass
