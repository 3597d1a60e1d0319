"""Exception hierarchy. CLI exit codes: DataError -> 1, ConfigError -> 2."""


class LaborfluxError(Exception):
    """Base class for all pipeline errors."""


class DataError(LaborfluxError):
    """Input data violates a schema, range, or consistency contract."""


class SchemaError(DataError):
    """File header or column layout does not match the expected schema."""


class ConfigError(LaborfluxError):
    """Run configuration is missing, malformed, or self-contradictory."""
