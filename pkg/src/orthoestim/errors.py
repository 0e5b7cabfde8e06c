"""Exception and warning types shared across the package."""


class OrthoestimError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(OrthoestimError):
    """A requested column is absent or has the wrong kind for the operation."""


class MissingColumn(SchemaError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"required column {column!r} not found")


class EmptyData(OrthoestimError):
    """No observations available where at least one is required."""


class IncompleteRow(OrthoestimError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"row {row} has fewer cells than the header")


class NonNumericCell(OrthoestimError):
    def __init__(self, row, column):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column!r}: cell is not a finite number")


class BinaryDomain(OrthoestimError):
    def __init__(self, row, column):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column!r}: binary column has value outside {{0, 1}}")


class OrdinalDomain(OrthoestimError):
    def __init__(self, row, column):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column!r}: value is not one of the declared categories")


class TooManyClasses(OrthoestimError):
    def __init__(self, classes, distinct):
        self.classes = classes
        self.distinct = distinct
        super().__init__(f"cannot form {classes} classes from {distinct} distinct values")


class NegativeDuration(OrthoestimError):
    """A wait-time input was negative."""


class BadFoldCount(OrthoestimError):
    def __init__(self, k, n):
        self.k = k
        self.n = n
        super().__init__(f"fold count k={k} must satisfy 2 <= k <= n={n}")


class ThetaRange(OrthoestimError):
    """Copula dependence parameter outside the family's valid range."""


class InvalidProbability(OrthoestimError):
    """A probability argument was NaN or outside [0, 1]."""


class RhoRange(OrthoestimError):
    """Bivariate normal correlation must lie strictly inside (-1, 1)."""


class DimMismatch(OrthoestimError):
    """Vector/matrix dimensions do not agree with the model's parameters."""


class ThresholdOrder(OrthoestimError):
    """Ordered-model thresholds must be strictly increasing."""


class DegenerateLikelihood(OrthoestimError):
    def __init__(self, row=None, detail=""):
        self.row = row
        where = f" (observation {row})" if row is not None else ""
        super().__init__(f"zero-probability observation in likelihood{where}{detail}")


class NegativeCell(OrthoestimError):
    """A joint cell probability fell below the -1e-12 validity floor."""


class NoPolicyVariation(OrthoestimError):
    """The policy column is constant; no effect is identifiable."""


class DegenerateTreatmentResidual(OrthoestimError):
    """Sum of squared policy residuals is numerically zero."""


class DegenerateGroupWarning(UserWarning):
    """A normalization group with max == min was mapped to 0.0."""


class DegeneratePropensityWarning(UserWarning):
    """A cross-fitting training fold had a constant policy column."""
