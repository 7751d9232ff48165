"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class IndexClrError(Exception):
    exit_code = 1


class InvalidConfigError(IndexClrError, ValueError):
    exit_code = 2


class InvalidDataError(IndexClrError, ValueError):
    exit_code = 3


class DegenerateScaleError(InvalidDataError):
    """A covariate or index has zero sample variance."""


class DegenerateProfileError(IndexClrError):
    exit_code = 4


class CellTimeoutError(IndexClrError):
    exit_code = 5
