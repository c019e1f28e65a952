class DataError(ValueError):
    """Bad or inconsistent input data (maps to CLI exit code 3)."""


class ParamFileError(DataError):
    """Parameter file is corrupt, truncated or of an unknown version."""


class NumericError(RuntimeError):
    """Training diverged (NaN/inf loss); maps to CLI exit code 4."""
