"""Exception hierarchy shared by all modules."""


class FloquetTransferError(Exception):
    """Base class for every error raised by this package."""


class NumericalFault(FloquetTransferError):
    """A numerical routine could not produce a trustworthy result."""


class NonHermitianError(NumericalFault, ValueError):
    """An operator that must be Hermitian is not, beyond tolerance."""


class DimensionMismatchError(NumericalFault, ValueError):
    """Operators or states of incompatible dimension were combined."""


class PeriodicityError(NumericalFault, ValueError):
    """A generator declared T-periodic failed the periodicity check."""


class DivergentFlipTimeError(NumericalFault, ArithmeticError):
    """The quasienergy gap vanishes, so the flip time is infinite.

    This happens at coherent-destruction-of-tunneling points, where the
    two quasienergies are degenerate and no population transfer occurs.
    """


class FeatureError(NumericalFault):
    """A requested spectral feature could not be resolved."""


class SchemaError(FloquetTransferError, ValueError):
    """A system description document is malformed."""
