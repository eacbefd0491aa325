class NotApplicableError(ValueError):
    """A statistic or metric is undefined for the given input (skip signal)."""


class ServiceError(RuntimeError):
    """A model service could not be reached after all retry attempts."""


class ProtocolError(ServiceError):
    """A model service answered with a malformed or inconsistent payload."""

    def __init__(self, endpoint, message):
        super().__init__(f"{endpoint}: {message}")
        self.endpoint = endpoint


class ConfigError(ValueError):
    """Configuration file violates the schema; message names the field."""


class QueryDropped(Exception):
    """A query produced no usable training signal and leaves the dataset."""

    def __init__(self, query_id, reason):
        super().__init__(f"{query_id}: {reason}")
        self.query_id = query_id
        self.reason = reason
