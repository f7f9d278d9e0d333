"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a geometric or numeric operation."""


class FormatError(ValueError):
    """A binary payload (DVOL, velodyne scan, PNG) is malformed."""


class ParseError(ValueError):
    """A text file (calibration, labels) could not be parsed.

    ``key`` names the offending entry, or ``line`` the 1-based line number.
    """

    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line
