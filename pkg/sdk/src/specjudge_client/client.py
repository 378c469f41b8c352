"""Synchronous session against the reward service.

The session is a thin transport: scalars, advantages and breakdowns are
returned exactly as the service computed them, never recomputed here.
One session per worker; sessions are not thread-safe.
"""

import time
from typing import NamedTuple

import httpx

from .errors import (
    AuthFailed,
    ClientError,
    ConnectionFailed,
    SchemaMismatch,
    ServiceUnavailable,
    ValidationFailed,
)

EXPECTED_SCHEMA_VERSION = "1"

_sleep = time.sleep  # module-level so tests can stub the backoff wait


class RewardGroup(NamedTuple):
    """One scored rollout group, positionally aligned with the candidates.

    A candidate the service could not score carries None in `scalars` and
    `advantages` and an error object in `breakdowns`.
    """

    scalars: list
    advantages: list
    breakdowns: list


class ClientSession:
    def __init__(
        self,
        base_url: str,
        auth_token: str | None = None,
        timeout: float = 30.0,
        retries: int = 2,
        backoff: float = 0.25,
    ):
        if timeout <= 0:
            raise ValueError(f"timeout must be positive, got {timeout}")
        if retries < 0:
            raise ValueError(f"retries must be >= 0, got {retries}")
        headers = {}
        if auth_token:
            headers["Authorization"] = f"Bearer {auth_token}"
        self.retries = retries
        self.backoff = backoff
        self._http = httpx.Client(
            base_url=base_url.rstrip("/"), timeout=timeout, headers=headers)
        self._schema_checked = False

    # -- public API -----------------------------------------------------

    def reward_group(self, code, ground_truth, candidates, weights=None) -> RewardGroup:
        payload = {
            "code": code,
            "ground_truth": ground_truth,
            "candidates": list(candidates),
        }
        if weights is not None:
            payload["weights"] = list(weights)
        data = self._request("POST", "/v1/reward", payload)
        breakdowns = data["rewards"]
        scalars = [b.get("scalar") for b in breakdowns]
        return RewardGroup(scalars, data["advantages"], breakdowns)

    def reward_groups(self, requests) -> list:
        """Batch helper: one reward_group call per (code, gt, candidates)."""
        return [self.reward_group(*req) for req in requests]

    def health(self) -> dict:
        return self._request("GET", "/v1/health")

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- transport ------------------------------------------------------

    def _request(self, method: str, path: str, payload=None) -> dict:
        last_error: ClientError | None = None
        for attempt in range(self.retries + 1):
            try:
                response = self._http.request(method, path, json=payload)
            except httpx.HTTPError as exc:
                last_error = ConnectionFailed(f"{method} {path}: {exc}")
            else:
                if response.status_code < 300:
                    data = response.json()
                    self._check_schema(data)
                    return data
                last_error = self._error_for(response)
                if not isinstance(last_error, (ServiceUnavailable, ConnectionFailed)):
                    raise last_error  # deterministic failure, retrying can't help
            if attempt < self.retries:
                _sleep(self.backoff * (2 ** attempt))
        raise last_error

    def _check_schema(self, data: dict):
        if self._schema_checked:
            return
        found = data.get("schema_version")
        if found != EXPECTED_SCHEMA_VERSION:
            raise SchemaMismatch(
                f"service speaks schema_version {found!r}, "
                f"this client expects {EXPECTED_SCHEMA_VERSION!r}")
        self._schema_checked = True

    @staticmethod
    def _error_for(response: httpx.Response) -> ClientError:
        status = response.status_code
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        message = f"{status}: {detail}"
        if status == 401:
            return AuthFailed(message, status)
        if status in (400, 413, 422):
            return ValidationFailed(message, status)
        if status >= 500:
            return ServiceUnavailable(message, status)
        return ClientError(message, status)
