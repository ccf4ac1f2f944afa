"""Backend gateway for the four LLM roles.

Every role (planner, generator, reviewer, checker) talks through complete(),
which dispatches to either a remote chat-completion endpoint or a fully
deterministic local mock. Remote calls retry transient failures with
exponential backoff and never log or persist the API key.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping

import requests

from .errors import (
    AuthMissing,
    BackendExhausted,
    ConfigError,
    RemoteError,
    RequestTimedOut,
)

log = logging.getLogger(__name__)

ROLES = ("planner", "generator", "reviewer", "checker")

_BACKOFF_BASE = 0.25
_RETRIABLE_STATUSES = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class MockProfile:
    """Knobs for the deterministic mock backends."""

    p_malformed: float = 0.0
    p_unsafe: float = 0.0
    catalog_bias: Mapping[str, float] = field(default_factory=dict)
    checker_accuracy: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name, value in (("p_malformed", self.p_malformed), ("p_unsafe", self.p_unsafe)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        for label, value in self.checker_accuracy.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"checker_accuracy[{label!r}] must be in [0, 1]")
        for keyword, weight in self.catalog_bias.items():
            if not weight > 0.0:
                raise ValueError(f"catalog_bias[{keyword!r}] must be positive")


@dataclass(frozen=True)
class BackendConfig:
    role: str
    kind: str
    endpoint: str | None = None
    model: str | None = None
    api_key_env: str | None = None
    temperature: float = 0.7
    timeout: float = 30.0
    max_retries: int = 2
    mock_seed: int | None = None
    mock_profile: MockProfile | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigError(f"unknown backend role {self.role!r}")
        if self.kind not in ("remote", "mock"):
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be non-negative")
        if self.kind == "remote":
            missing = [
                name
                for name, value in (
                    ("endpoint", self.endpoint),
                    ("model", self.model),
                    ("api_key_env", self.api_key_env),
                )
                if not value
            ]
            if missing:
                raise ConfigError(
                    f"remote {self.role} backend needs {', '.join(missing)}"
                )
        else:
            if self.mock_seed is None:
                raise ConfigError(f"mock {self.role} backend needs mock_seed")
            if self.mock_profile is None:
                raise ConfigError(f"mock {self.role} backend needs mock_profile")


@dataclass(frozen=True)
class Exchange:
    role: str
    prompt: str
    response: str
    latency: float
    attempt: int


def _remote_complete(
    cfg: BackendConfig, prompt: str, sleep: Callable[[float], None]
) -> Exchange:
    key = os.environ.get(cfg.api_key_env or "")
    if not key:
        raise AuthMissing(
            f"environment variable {cfg.api_key_env} is unset; "
            f"cannot call the {cfg.role} backend"
        )
    body = {
        "model": cfg.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": cfg.temperature,
    }
    started = time.monotonic()
    last_error: Exception | None = None
    attempts = cfg.max_retries + 1
    for attempt in range(1, attempts + 1):
        try:
            response = requests.post(
                cfg.endpoint,
                json=body,
                headers={"Authorization": f"Bearer {key}"},
                timeout=cfg.timeout,
            )
            if response.status_code in _RETRIABLE_STATUSES:
                last_error = RemoteError(
                    f"{cfg.role} backend answered {response.status_code}",
                    status=response.status_code,
                )
            elif response.status_code >= 400:
                raise RemoteError(
                    f"{cfg.role} backend answered {response.status_code}",
                    status=response.status_code,
                )
            else:
                try:
                    content = response.json()["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    raise RemoteError(
                        f"{cfg.role} backend returned a malformed completion payload"
                    ) from exc
                return Exchange(
                    role=cfg.role,
                    prompt=prompt,
                    response=content,
                    latency=time.monotonic() - started,
                    attempt=attempt,
                )
        except requests.Timeout:
            last_error = RequestTimedOut(
                f"{cfg.role} backend timed out after {cfg.timeout}s"
            )
        except requests.ConnectionError as exc:
            last_error = RemoteError(f"{cfg.role} backend unreachable: {exc}")
        if attempt < attempts:
            delay = _BACKOFF_BASE * (2 ** (attempt - 1))
            log.warning(
                "%s backend attempt %d/%d failed (%s); retrying in %.2fs",
                cfg.role, attempt, attempts, last_error, delay,
            )
            sleep(delay)
    raise BackendExhausted(
        f"{cfg.role} backend failed after {attempts} attempt(s): {last_error}"
    )


def complete(
    cfg: BackendConfig, prompt: str, sleep: Callable[[float], None] = time.sleep
) -> Exchange:
    """One prompt in, one response out, regardless of backend kind."""
    if cfg.kind == "mock":
        from . import mock

        response = mock.respond(
            cfg.role,
            cfg.mock_seed or 0,
            cfg.mock_profile or MockProfile(),
            prompt,
            label=cfg.model or "mock",
        )
        return Exchange(role=cfg.role, prompt=prompt, response=response, latency=0.0, attempt=1)
    return _remote_complete(cfg, prompt, sleep)


class Gateway:
    """Role-keyed dispatch with a per-backend concurrency cap."""

    def __init__(
        self,
        configs: Mapping[str, BackendConfig],
        concurrency: int = 2,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.configs = dict(configs)
        self._sleep = sleep
        self._semaphores = {
            role: threading.BoundedSemaphore(concurrency) for role in self.configs
        }

    def config(self, role: str) -> BackendConfig:
        try:
            return self.configs[role]
        except KeyError:
            raise ConfigError(f"no backend configured for role {role!r}") from None

    def complete(self, role: str, prompt: str) -> Exchange:
        return self.complete_with(self.config(role), prompt)

    def complete_with(self, cfg: BackendConfig, prompt: str) -> Exchange:
        """Complete against an explicit config, e.g. a cross-check override.

        The concurrency cap for the config's role still applies when that
        role is registered here.
        """
        semaphore = self._semaphores.get(cfg.role)
        if semaphore is None:
            return complete(cfg, prompt, sleep=self._sleep)
        with semaphore:
            return complete(cfg, prompt, sleep=self._sleep)
