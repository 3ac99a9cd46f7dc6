"""Newline-delimited JSON protocol: handshake first, then id-keyed requests.

Bad requests get an error response and the session stays alive; EOF or a
``shutdown`` message ends the loop.  Also provides a TCP listener that
serves one connection at a time with the same handler.
"""

from __future__ import annotations

import json
import socket
import sys
from typing import IO

from lm_service.service import MaskedLmService, ServiceError


def _write(stream: IO[str], obj: dict) -> None:
    stream.write(json.dumps(obj, separators=(",", ":"), sort_keys=True) + "\n")
    stream.flush()


def handle_request(service: MaskedLmService, message: dict) -> dict:
    kind = message.get("kind")
    if kind == "tokenize":
        ids, pieces = service.tokenize(message["surface"])
        return {"ids": ids, "pieces": pieces}
    if kind == "logprobs":
        return {"logprobs": service.logprobs(message["segments"], message["queries"])}
    if kind == "embeddings":
        tokens, vectors = service.embeddings(tokens=message.get("tokens"),
                                             export_all=bool(message.get("all")))
        return {"tokens": tokens, "vectors": [[float(v) for v in row] for row in vectors]}
    if kind == "complete":
        return {"text": service.complete(message["prompt"])}
    raise ServiceError(f"unknown request kind {kind!r}")


def serve_stdio(service: MaskedLmService, in_stream: IO[str] | None = None,
                out_stream: IO[str] | None = None) -> None:
    in_stream = in_stream or sys.stdin
    out_stream = out_stream or sys.stdout
    _write(out_stream, service.handshake())
    for line in in_stream:
        if not line.strip():
            continue
        request_id = None
        try:
            message = json.loads(line)
            request_id = message.get("id")
            if message.get("kind") == "shutdown":
                if request_id is not None:
                    _write(out_stream, {"id": request_id, "ok": True})
                break
            response = handle_request(service, message)
            _write(out_stream, {"id": request_id, "ok": True, **response})
        except Exception as exc:  # protocol violations must not kill the session
            _write(out_stream, {"id": request_id, "ok": False, "error": str(exc)})


def serve_tcp(service: MaskedLmService, host: str, port: int,
              max_connections: int | None = None) -> None:
    listener = socket.create_server((host, port))
    served = 0
    try:
        while max_connections is None or served < max_connections:
            connection, _addr = listener.accept()
            with connection:
                reader = connection.makefile("r", encoding="utf-8")
                writer = connection.makefile("w", encoding="utf-8")
                serve_stdio(service, reader, writer)
            served += 1
    finally:
        listener.close()
