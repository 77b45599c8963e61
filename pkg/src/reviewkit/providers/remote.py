"""Remote JSON-over-HTTP provider.

Speaks the minimal contract this package defines (POST /v1/complete and
POST /v1/embed), not any vendor API; adapting a vendor endpoint is a thin
translation layer on the server side.
"""

from __future__ import annotations

import random
import time

import requests

from ..embedding import EmbeddingVector
from ..errors import ProviderProtocolError, ProviderUnavailable
from .base import ProviderRequest, validate_response


class RemoteProvider:
    def __init__(self, url: str, timeout: float = 10.0,
                 rng: random.Random | None = None,
                 sleep=time.sleep):
        self.url = url.rstrip("/")
        self.timeout = timeout
        self._rng = rng or random.Random()
        self._sleep = sleep

    def _post(self, path: str, body: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(2):                      # one retry
            if attempt:
                self._sleep(0.2 + self._rng.random() * 0.3)
            try:
                response = requests.post(self.url + path, json=body, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = ProviderUnavailable(f"provider returned {response.status_code}")
                continue
            try:
                data = response.json()
            except ValueError:
                raise ProviderProtocolError("provider response is not JSON")
            if not isinstance(data, dict) or "ok" not in data:
                raise ProviderProtocolError("provider response missing 'ok'")
            if not data["ok"]:
                raise ProviderUnavailable(str(data.get("error", "provider reported failure")))
            if "payload" not in data:
                raise ProviderProtocolError("provider response missing 'payload'")
            return data["payload"]
        raise ProviderUnavailable(f"provider unreachable: {last_error}")

    def generate(self, request: ProviderRequest) -> dict:
        payload = self._post("/v1/complete", request.to_dict())
        return validate_response(request.task, payload)

    def embed(self, text: str) -> EmbeddingVector:
        payload = self._post("/v1/embed", {"text": text})
        if not isinstance(payload, dict) or "values" not in payload:
            raise ProviderProtocolError("embed response missing 'values'")
        values = payload["values"]
        if not isinstance(values, list) or not all(isinstance(v, (int, float)) for v in values):
            raise ProviderProtocolError("embed values must be numbers")
        return EmbeddingVector(tuple(float(v) for v in values),
                               bool(payload.get("empty", False)))
