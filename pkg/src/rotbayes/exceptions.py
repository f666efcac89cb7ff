class RotbayesError(Exception):
    pass


class DegeneratePosteriorError(RotbayesError):
    """Every particle has zero likelihood; the posterior cannot be normalized."""


class UndefinedMeanError(RotbayesError):
    """The weighted resultant is too short for a circular mean to exist."""


class SingularFisherError(RotbayesError, ValueError):
    pass


class UnboundedObjectiveError(RotbayesError):
    pass


class PoolExhaustedError(RotbayesError):
    pass


class ConfigError(RotbayesError, ValueError):
    pass
