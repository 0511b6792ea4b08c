"""Model backends: wire protocol, in-process stubs, transcripts, HTTP client/server.

Backends are selected by URI:
  * ``stub:scene``                   deterministic synthetic shape world
  * ``stub:scripted:<fixture-path>`` digest-keyed scripted responses
  * ``http(s)://host:port``          remote service speaking the protocol

The ``PAIRDIFF_BACKEND`` environment variable supplies the default URI.
"""

from __future__ import annotations

import os

from .client import HTTPBackend
from .protocol import (
    CAPABILITIES,
    GENERATIVE_CAPABILITIES,
    Backend,
    BackendError,
    request_digest,
)
from .stubs import SceneStub, ScriptedStub
from .transcript import RecordingBackend, ReplayBackend, Transcript

BACKEND_ENV_VAR = "PAIRDIFF_BACKEND"
DEFAULT_BACKEND_URI = "stub:scene"


def resolve_backend(uri: str | None = None) -> Backend:
    if uri is None:
        uri = os.environ.get(BACKEND_ENV_VAR, DEFAULT_BACKEND_URI)
    if uri == "stub:scene":
        return SceneStub()
    if uri.startswith("stub:scripted:"):
        return ScriptedStub.from_file(uri[len("stub:scripted:") :])
    if uri.startswith(("http://", "https://")):
        return HTTPBackend(uri)
    raise ValueError(f"unrecognized backend URI {uri!r}")


__all__ = [
    "Backend",
    "BackendError",
    "BACKEND_ENV_VAR",
    "CAPABILITIES",
    "DEFAULT_BACKEND_URI",
    "GENERATIVE_CAPABILITIES",
    "HTTPBackend",
    "RecordingBackend",
    "ReplayBackend",
    "SceneStub",
    "ScriptedStub",
    "Transcript",
    "request_digest",
    "resolve_backend",
]
