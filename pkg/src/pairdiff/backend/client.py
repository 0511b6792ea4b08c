"""HTTP client speaking the backend wire protocol."""

from __future__ import annotations

import httpx

from .protocol import ERR_BACKEND, Backend, BackendError


class HTTPBackend(Backend):
    name = "http"

    def __init__(self, base_url: str, timeout: float = 120.0):
        super().__init__()
        self.base_url = base_url.rstrip("/")
        self._client = httpx.Client(base_url=self.base_url, timeout=timeout)

    def _call(self, capability, payload, seed, request_id) -> dict:
        try:
            resp = self._client.post(
                f"/v1/{capability}",
                json={"request_id": request_id, "seed": seed, "payload": payload},
            )
        except httpx.HTTPError as e:
            raise BackendError(ERR_BACKEND, f"transport failure: {e}") from e
        body = _json_or_error(resp)
        if resp.status_code == 200:
            return body["result"]
        raise BackendError(body.get("code", ERR_BACKEND), body.get("message", resp.text))

    def call_batch(self, capability, items) -> list[dict]:
        requests = [
            {"request_id": self.next_request_id(), "seed": seed, "payload": payload}
            for payload, seed in items
        ]
        try:
            resp = self._client.post(f"/v1/batch/{capability}", json={"requests": requests})
        except httpx.HTTPError as e:
            raise BackendError(ERR_BACKEND, f"transport failure: {e}") from e
        body = _json_or_error(resp)
        if resp.status_code != 200:
            raise BackendError(body.get("code", ERR_BACKEND), body.get("message", resp.text))
        results = []
        for item in body["responses"]:
            if "error" in item:
                raise BackendError(item["error"]["code"], item["error"]["message"])
            results.append(item["result"])
        return results

    def close(self) -> None:
        self._client.close()


def _json_or_error(resp: httpx.Response) -> dict:
    try:
        return resp.json()
    except ValueError as e:
        raise BackendError(ERR_BACKEND, f"non-JSON response ({resp.status_code})") from e
