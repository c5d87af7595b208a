"""Exception hierarchy. Each class carries a short category used by the CLI."""


class TGNNError(Exception):
    category = "error"


class ParseError(TGNNError):
    category = "parse_error"


class DataError(TGNNError):
    category = "data_error"


class ConfigError(TGNNError, ValueError):
    category = "config_error"


class DimensionMismatchError(TGNNError, ValueError):
    category = "dimension_mismatch"


class DivergenceError(TGNNError, FloatingPointError):
    category = "divergence"


class CheckpointError(TGNNError):
    category = "checkpoint_error"
