"""HTTP clients for the remote discriminator backends.

Plain JSON-over-POST. The NLI endpoint takes ``{"premise", "hypothesis"}``
and answers ``{"distance": <float in [0,1]>}``; the completion endpoint
takes ``{"prompt"}`` and answers ``{"text": <str>}``. Connection problems
and timeouts surface as TransportError, everything wrong with an answer
that did arrive (bad status, bad JSON, missing/mistyped fields) as
ProtocolError carrying the offending payload.

Endpoints and knobs resolve from the environment when not passed
explicitly:

    CFGDECODE_NLI_URL       NLI scorer endpoint
    CFGDECODE_LLM_URL       completion endpoint
    CFGDECODE_HTTP_TIMEOUT  per-request timeout in seconds (default 10)
    CFGDECODE_API_KEY       sent as "Authorization: Bearer <key>" if set
    CFGDECODE_CACHE_PATH    JSONL cache file for NLI scores

NLI scores are cached (they are deterministic per pair and the endpoint
is the slow part of a sweep). The cache is an append-only JSONL file
keyed by a digest of the request; concurrent misses for the same key are
coalesced so a thread pool never stampedes the endpoint.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import warnings

import requests

from .errors import ConfigError, ProtocolError, TransportError

__all__ = ["NliClient", "LlmClient", "resolve_timeout"]

_DEFAULT_TIMEOUT = 10.0


def resolve_timeout(timeout: float | None = None) -> float:
    if timeout is None:
        raw = os.environ.get("CFGDECODE_HTTP_TIMEOUT", "")
        if raw:
            try:
                timeout = float(raw)
            except ValueError:
                raise ConfigError(
                    f"CFGDECODE_HTTP_TIMEOUT is not a number: {raw!r}"
                ) from None
        else:
            timeout = _DEFAULT_TIMEOUT
    if timeout <= 0:
        raise ConfigError(f"timeout must be positive, got {timeout}")
    return float(timeout)


def _resolve_url(url: str | None, env_var: str) -> str:
    url = url or os.environ.get(env_var, "")
    if not url:
        raise ConfigError(f"no endpoint configured: pass url= or set {env_var}")
    return url


class _JsonEndpoint:
    """One POST endpoint with shared error mapping."""

    def __init__(self, url: str, timeout: float, api_key: str | None):
        self.url = url
        self.timeout = timeout
        self._headers = {"Content-Type": "application/json"}
        api_key = api_key or os.environ.get("CFGDECODE_API_KEY") or None
        if api_key:
            self._headers["Authorization"] = f"Bearer {api_key}"
        self._session = requests.Session()

    def post(self, body: dict) -> dict:
        try:
            resp = self._session.post(
                self.url, json=body, headers=self._headers, timeout=self.timeout
            )
        except requests.exceptions.RequestException as exc:
            raise TransportError(f"request to {self.url} failed: {exc}") from exc
        if resp.status_code != 200:
            raise ProtocolError(
                f"{self.url} answered HTTP {resp.status_code}",
                payload=resp.text[:2000],
            )
        try:
            data = resp.json()
        except ValueError as exc:
            raise ProtocolError(
                f"{self.url} answered non-JSON", payload=resp.text[:2000]
            ) from exc
        if not isinstance(data, dict):
            raise ProtocolError(
                f"{self.url} answered a non-object JSON value", payload=data
            )
        return data


class NliClient:
    """Entailment-based mismatch scorer with a JSONL response cache."""

    def __init__(
        self,
        url: str | None = None,
        *,
        timeout: float | None = None,
        api_key: str | None = None,
        cache_path: str | None = None,
    ):
        self._endpoint = _JsonEndpoint(
            _resolve_url(url, "CFGDECODE_NLI_URL"), resolve_timeout(timeout), api_key
        )
        self._cache_path = cache_path or os.environ.get("CFGDECODE_CACHE_PATH") or None
        self._cache: dict[str, float] = {}
        self._lock = threading.Lock()
        self._in_flight: dict[str, threading.Event] = {}
        if self._cache_path and os.path.exists(self._cache_path):
            self._load_cache()

    def _load_cache(self) -> None:
        with open(self._cache_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                    self._cache[row["key"]] = float(row["distance"])
                except (ValueError, KeyError, TypeError):
                    # a torn tail line from an interrupted run is not fatal
                    continue

    def _key(self, premise: str, hypothesis: str) -> str:
        blob = json.dumps(
            {"premise": premise, "hypothesis": hypothesis}, sort_keys=True
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def score(self, premise: str, hypothesis: str) -> float:
        """Distance in [0, 1] for one (premise, hypothesis) pair.

        Served from cache when possible. Out-of-range answers are clamped
        with a warning rather than rejected: scorers drift a hair outside
        the interval and a clamp is the documented behavior.
        """
        key = self._key(premise, hypothesis)
        while True:
            with self._lock:
                if key in self._cache:
                    return self._cache[key]
                waiter = self._in_flight.get(key)
                if waiter is None:
                    self._in_flight[key] = threading.Event()
                    break
            # someone else is fetching this key; wait for them, then re-check
            waiter.wait()
            with self._lock:
                if key in self._cache:
                    return self._cache[key]
                # the other fetch failed; take over the miss ourselves

        try:
            data = self._endpoint.post({"premise": premise, "hypothesis": hypothesis})
            if "distance" not in data:
                raise ProtocolError(
                    f"{self._endpoint.url} answer lacks 'distance'", payload=data
                )
            try:
                distance = float(data["distance"])
            except (TypeError, ValueError):
                raise ProtocolError(
                    f"{self._endpoint.url} 'distance' is not a number", payload=data
                ) from None
            if distance != distance:  # NaN
                raise ProtocolError(
                    f"{self._endpoint.url} 'distance' is NaN", payload=data
                )
            if not 0.0 <= distance <= 1.0:
                warnings.warn(
                    f"nli distance {distance} outside [0, 1]; clamping",
                    stacklevel=2,
                )
                distance = min(1.0, max(0.0, distance))
            with self._lock:
                self._cache[key] = distance
            if self._cache_path:
                self._append_cache_row(key, distance)
            return distance
        finally:
            with self._lock:
                event = self._in_flight.pop(key, None)
            if event is not None:
                event.set()

    def _append_cache_row(self, key: str, distance: float) -> None:
        row = json.dumps({"key": key, "distance": distance})
        with self._lock:
            with open(self._cache_path, "a", encoding="utf-8") as fh:
                fh.write(row + "\n")


class LlmClient:
    """Thin completion client: one prompt in, one text answer out."""

    def __init__(
        self,
        url: str | None = None,
        *,
        timeout: float | None = None,
        api_key: str | None = None,
    ):
        self._endpoint = _JsonEndpoint(
            _resolve_url(url, "CFGDECODE_LLM_URL"), resolve_timeout(timeout), api_key
        )

    def complete(self, prompt: str) -> str:
        data = self._endpoint.post({"prompt": prompt})
        if "text" not in data:
            raise ProtocolError(
                f"{self._endpoint.url} answer lacks 'text'", payload=data
            )
        if not isinstance(data["text"], str):
            raise ProtocolError(
                f"{self._endpoint.url} 'text' is not a string", payload=data
            )
        return data["text"]
