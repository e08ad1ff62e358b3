"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class PagSrError(Exception):
    exit_code = 1


class InvalidArgument(PagSrError, ValueError):
    exit_code = 2


class InvalidConfig(PagSrError, ValueError):
    exit_code = 2


class DatasetIntegrityError(PagSrError):
    exit_code = 3


class LevelNotFound(DatasetIntegrityError, FileNotFoundError):
    exit_code = 3


class CheckpointError(PagSrError):
    exit_code = 3


class NumericFailure(PagSrError, FloatingPointError):
    exit_code = 4
