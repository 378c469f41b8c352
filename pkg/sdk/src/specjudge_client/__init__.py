"""Client SDK for the specjudge reward service."""

from .client import EXPECTED_SCHEMA_VERSION, ClientSession, RewardGroup
from .errors import (
    AuthFailed,
    ClientError,
    ConnectionFailed,
    SchemaMismatch,
    ServiceUnavailable,
    ValidationFailed,
)

__all__ = [
    "EXPECTED_SCHEMA_VERSION",
    "ClientSession",
    "RewardGroup",
    "ClientError",
    "ConnectionFailed",
    "AuthFailed",
    "ValidationFailed",
    "ServiceUnavailable",
    "SchemaMismatch",
]
