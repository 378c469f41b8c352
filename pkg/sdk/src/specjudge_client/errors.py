"""Typed failures mirroring the reward service's status codes."""


class ClientError(Exception):
    """Base class for all SDK failures."""

    def __init__(self, message: str, status_code: int | None = None):
        super().__init__(message)
        self.status_code = status_code


class ConnectionFailed(ClientError):
    """The service could not be reached at the transport level."""


class AuthFailed(ClientError):
    """The service rejected the bearer token (401)."""


class ValidationFailed(ClientError):
    """The service rejected the request body (400/422)."""


class ServiceUnavailable(ClientError):
    """The service answered but cannot do the work right now (503)."""


class SchemaMismatch(ClientError):
    """The service speaks a different schema_version than this client."""
