"""Exception hierarchy shared across the toolkit.

Three families map onto the CLI exit codes: InputError (2) for anything
wrong with files, schemas, or rule definitions; ServiceError (3) for the
completion endpoint; UndefinedMetricError (4) for evaluations that are
mathematically undefined on the given data.
"""


class EgpkitError(Exception):
    """Base class for all toolkit errors."""


class InputError(EgpkitError):
    """Bad input data, schema, or configuration."""


class SchemaError(InputError):
    """A tabular input is missing or misusing a documented column."""


class ParseError(InputError):
    """A structured document could not be parsed; message carries the line."""


class RecordError(InputError):
    """A single record in a line-oriented file is invalid."""


class JoinError(InputError):
    """Records reference identifiers missing from a companion table."""


class CatalogError(InputError):
    """A construct id cannot be resolved against the loaded catalog."""


class RuleError(InputError):
    """A rule definition failed to compile or an unknown rule was requested."""


class CoverageError(InputError):
    """Annotations reference (sentence, construct) pairs with no detection."""


class ServiceError(EgpkitError):
    """Base class for completion-endpoint failures."""


class TransportError(ServiceError):
    """The endpoint could not be reached or kept failing after retries."""


class ClassificationError(ServiceError):
    """The endpoint answered, but not in a usable shape (no Yes/No token)."""


class UndefinedMetricError(EgpkitError):
    """A requested statistic is undefined on the given data."""


class TuningError(UndefinedMetricError):
    """Threshold tuning cannot run, e.g. fewer essays than folds."""
