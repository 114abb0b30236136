"""Exception and warning types raised across the package."""


class InputError(ValueError):
    """Bad user input: malformed files, out-of-range arguments."""


class MalformedHeader(InputError):
    pass


class NonFiniteFeature(InputError):
    def __init__(self, row):
        super().__init__(f"non-finite feature value in row {row}")
        self.row = row


class NegativeMass(InputError):
    def __init__(self, row):
        super().__init__(f"negative mass in row {row}")
        self.row = row


class MassSumMismatch(InputError):
    pass


class EmptyDataset(InputError):
    pass


class KTooLarge(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class SingleClassDataset(InputError):
    pass


class BadPatchCoord(InputError):
    pass


class NotEnoughBaseRows(InputError):
    pass


class BudgetOutOfRange(InputError):
    pass


class KeepOutOfRange(InputError):
    pass


class MassWouldGoNegative(InputError):
    pass


class MissingLabelPolicyViolation(InputError):
    pass


class NonFiniteCost(InputError):
    pass


class InstanceTooLarge(InputError):
    pass


class DegenerateDuals(ValueError):
    """The exact LP on this instance has (numerically) non-unique duals."""


class NotConverged(RuntimeError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class NotConvergedWarning(RuntimeWarning):
    pass


class DegenerateSizeWarning(RuntimeWarning):
    """Calibrated gradients requested for a side with a single point."""
