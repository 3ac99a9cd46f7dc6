"""Mask-filling backend contract: wire protocol, client, and mock oracle.

The wire format is newline-delimited JSON over stdio pipes or a TCP socket.
The server speaks first with a handshake advertising its vocabulary size,
embedding dimension and casing.  Requests carry a session-unique ``id``;
responses may arrive in any order and are reassembled by id, so a client
may keep a bounded window of requests in flight.

Request kinds:

* ``tokenize``   {"surface": str} -> {"ids": [int], "pieces": [str]}
* ``logprobs``   {"segments": [...], "queries": [[str]]} -> {"logprobs": [{piece: lp}]}
* ``embeddings`` {"tokens": [str]} or {"all": true} -> {"tokens": [...], "vectors": [[f]]}
* ``complete``   {"prompt": str} -> {"text": str}   (optional, see handshake)

Prompt segments: {"kind": "text", "text": s} | {"kind": "mask", "count": k}
| {"kind": "soft", "id": "s1"} | {"kind": "pseudo", "id": "X", "vector": [...]}.
"""

from __future__ import annotations

import hashlib
import json
import socket
import subprocess
import zlib
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from ontocloze.prompting import ClozePrompt, Segment


class BackendError(RuntimeError):
    """Backend-side or transport failure; carries the request id when known."""

    def __init__(self, message: str, request_id: int | None = None):
        super().__init__(message if request_id is None
                         else f"request {request_id}: {message}")
        self.request_id = request_id


@dataclass(frozen=True)
class Handshake:
    name: str
    vocab_size: int
    dim: int
    casing: str  # cased | uncased
    supports_complete: bool = False

    def to_json(self) -> dict:
        return {"kind": "handshake", "name": self.name, "vocab_size": self.vocab_size,
                "dim": self.dim, "casing": self.casing, "complete": self.supports_complete}

    @classmethod
    def from_json(cls, obj: Mapping) -> "Handshake":
        return cls(name=obj["name"], vocab_size=obj["vocab_size"], dim=obj["dim"],
                   casing=obj["casing"], supports_complete=bool(obj.get("complete", False)))


def segments_to_json(segments: Sequence[Segment],
                     bindings: Mapping[str, Sequence[float]] | None = None) -> list[dict]:
    out = []
    for seg in segments:
        if seg.kind == "text":
            out.append({"kind": "text", "text": seg.text})
        elif seg.kind == "mask":
            out.append({"kind": "mask", "count": seg.count})
        elif seg.kind == "soft":
            out.append({"kind": "soft", "id": seg.text})
        elif seg.kind == "pseudo":
            vector = None
            if bindings and seg.text in bindings:
                vector = [float(v) for v in bindings[seg.text]]
            out.append({"kind": "pseudo", "id": seg.text, "vector": vector})
        else:
            raise ValueError(f"unknown segment kind {seg.kind!r}")
    return out


def prompt_fingerprint(segments: Sequence[Segment],
                       bindings: Mapping[str, Sequence[float]] | None = None) -> str:
    """Stable identity of a prompt, ignoring how many mask tokens expand the slot."""
    parts = []
    for seg in segments:
        if seg.kind == "text":
            parts.append(f"t:{seg.text}")
        elif seg.kind == "mask":
            parts.append("m")
        elif seg.kind == "soft":
            parts.append(f"s:{seg.text}")
        elif seg.kind == "pseudo":
            if bindings and seg.text in bindings:
                vec = np.asarray(bindings[seg.text], dtype=np.float32)
                digest = hashlib.sha256(vec.tobytes()).hexdigest()[:8]
                parts.append(f"p:{seg.text}:{digest}")
            else:
                parts.append(f"p:{seg.text}")
    return "|".join(parts)


class Backend:
    """In-process backend interface; wire and mock backends implement it."""

    def handshake(self) -> Handshake:
        raise NotImplementedError

    def tokenize(self, surface: str) -> tuple[list[int], list[str]]:
        raise NotImplementedError

    def logprobs(self, prompt: ClozePrompt, queries: Sequence[Sequence[str]],
                 bindings: Mapping[str, Sequence[float]] | None = None) -> list[dict[str, float]]:
        raise NotImplementedError

    def embeddings(self, tokens: Sequence[str] | None = None,
                   export_all: bool = False) -> tuple[list[str], np.ndarray]:
        raise NotImplementedError

    def complete(self, prompt: str) -> str:
        raise NotImplementedError

    def close(self) -> None:
        pass


# ---------------------------------------------------------------------------
# Mock oracle
# ---------------------------------------------------------------------------

def _word_id(piece: str) -> int:
    return zlib.crc32(piece.encode("utf-8"))


class MockOracleBackend(Backend):
    """Deterministic in-process backend for tests and desk-scale runs.

    ``spec`` maps ``(prompt fingerprint, token piece)`` to a log-prob; every
    other piece scores ``floor``.  Tokenization is whitespace splitting.
    """

    def __init__(self, spec: Mapping[tuple[str, str], float] | None = None,
                 floor: float = -5.0, dim: int = 16, name: str = "mock-oracle"):
        spec = dict(spec or {})
        for (fp, piece), value in spec.items():
            if value > 0:
                raise ValueError(f"log-prob for {piece!r} must be <= 0, got {value}")
        self.spec = spec
        self.floor = float(floor)
        self.dim = dim
        self.name = name
        self.calls: list[str] = []  # request kinds, for call-count assertions

    def handshake(self) -> Handshake:
        return Handshake(name=self.name, vocab_size=30000, dim=self.dim,
                         casing="cased", supports_complete=True)

    def tokenize(self, surface: str) -> tuple[list[int], list[str]]:
        self.calls.append("tokenize")
        pieces = surface.split()
        if not pieces:
            raise BackendError(f"cannot tokenize empty surface {surface!r}")
        return [_word_id(p) for p in pieces], pieces

    def score(self, fingerprint: str, piece: str) -> float:
        return self.spec.get((fingerprint, piece), self.floor)

    def logprobs(self, prompt: ClozePrompt, queries: Sequence[Sequence[str]],
                 bindings: Mapping[str, Sequence[float]] | None = None) -> list[dict[str, float]]:
        self.calls.append("logprobs")
        mask_total = sum(s.count for s in prompt.segments if s.kind == "mask")
        if mask_total != len(queries):
            raise BackendError(
                f"prompt has {mask_total} masks but {len(queries)} query positions")
        fp = prompt_fingerprint(prompt.segments, bindings)
        return [{piece: self.score(fp, piece) for piece in position} for position in queries]

    def embeddings(self, tokens: Sequence[str] | None = None,
                   export_all: bool = False) -> tuple[list[str], np.ndarray]:
        self.calls.append("embeddings")
        if export_all or tokens is None:
            tokens = ["[MASK]"] + sorted({piece for _, piece in self.spec})
        rows = np.stack([
            np.random.default_rng(_word_id(t)).standard_normal(self.dim) for t in tokens
        ])
        return list(tokens), rows.astype(np.float32)

    def complete(self, prompt: str) -> str:
        """Answer a lettered multiple-choice prompt with the best-scoring choice."""
        self.calls.append("complete")
        import re

        fp = f"t:{prompt}"
        best_letter, best_score = None, None
        for match in re.finditer(r"\(([a-z])\) ([^,]+?)(?=, \(|$)", prompt):
            letter, choice = match.group(1), match.group(2).strip()
            pieces = choice.split()
            score = sum(self.score(fp, p) for p in pieces) / max(len(pieces), 1)
            if best_score is None or score > best_score:
                best_letter, best_score = letter, score
        if best_letter is None:
            return "I cannot tell."
        return f"({best_letter})"


def favoring_entries(fingerprint: str, surfaces: Iterable[str],
                     value: float = -0.1) -> dict[tuple[str, str], float]:
    """Spec entries making every token of the given surfaces score ``value``."""
    entries = {}
    for surface in surfaces:
        for piece in surface.split():
            entries[(fingerprint, piece)] = value
    return entries


# ---------------------------------------------------------------------------
# Wire protocol
# ---------------------------------------------------------------------------

def write_message(stream: IO[str], obj: Mapping) -> None:
    stream.write(json.dumps(obj, separators=(",", ":"), sort_keys=True) + "\n")
    stream.flush()


def read_message(stream: IO[str]) -> dict | None:
    line = stream.readline()
    if not line:
        return None
    return json.loads(line)


class WireBackend(Backend):
    """Client for a backend process reachable over stdio pipes or TCP."""

    def __init__(self, reader: IO[str], writer: IO[str],
                 process: subprocess.Popen | None = None, window: int = 8):
        self._reader = reader
        self._writer = writer
        self._process = process
        self._socket = None
        self._next_id = 0
        self._pending: dict[int, dict] = {}
        self.window = window
        first = read_message(reader)
        if first is None or first.get("kind") != "handshake":
            raise BackendError("backend did not send a handshake")
        self._handshake = Handshake.from_json(first)

    @classmethod
    def from_command(cls, argv: Sequence[str], window: int = 8) -> "WireBackend":
        process = subprocess.Popen(
            list(argv), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1,
        )
        return cls(process.stdout, process.stdin, process=process, window=window)

    @classmethod
    def from_tcp(cls, host: str, port: int, window: int = 8) -> "WireBackend":
        sock = socket.create_connection((host, port))
        reader = sock.makefile("r", encoding="utf-8")
        writer = sock.makefile("w", encoding="utf-8")
        backend = cls(reader, writer, window=window)
        backend._socket = sock
        return backend

    def handshake(self) -> Handshake:
        return self._handshake

    def _send(self, kind: str, payload: Mapping) -> int:
        request_id = self._next_id
        self._next_id += 1
        message = {"id": request_id, "kind": kind}
        message.update(payload)
        try:
            write_message(self._writer, message)
        except (BrokenPipeError, OSError) as exc:
            raise BackendError(f"transport failure: {exc}", request_id) from exc
        return request_id

    def _receive(self, request_id: int) -> dict:
        while request_id not in self._pending:
            message = read_message(self._reader)
            if message is None:
                raise BackendError("backend closed the connection", request_id)
            got = message.get("id")
            if got is None:
                raise BackendError(f"backend protocol error: {message.get('error')}")
            self._pending[got] = message
        response = self._pending.pop(request_id)
        if not response.get("ok", False):
            raise BackendError(response.get("error", "unknown backend error"), request_id)
        return response

    def call(self, kind: str, payload: Mapping) -> dict:
        return self._receive(self._send(kind, payload))

    def call_many(self, requests: Sequence[tuple[str, Mapping]]) -> list[dict]:
        """Pipeline requests with a bounded in-flight window; results in order."""
        ids: list[int] = []
        responses: dict[int, dict] = {}
        for kind, payload in requests:
            while len(ids) - len(responses) >= self.window:
                next_missing = next(i for i in ids if i not in responses)
                responses[next_missing] = self._receive(next_missing)
            ids.append(self._send(kind, payload))
        for request_id in ids:
            if request_id not in responses:
                responses[request_id] = self._receive(request_id)
        return [responses[i] for i in ids]

    def tokenize(self, surface: str) -> tuple[list[int], list[str]]:
        response = self.call("tokenize", {"surface": surface})
        return response["ids"], response["pieces"]

    def logprobs(self, prompt: ClozePrompt, queries: Sequence[Sequence[str]],
                 bindings: Mapping[str, Sequence[float]] | None = None) -> list[dict[str, float]]:
        response = self.call("logprobs", {
            "segments": segments_to_json(prompt.segments, bindings),
            "queries": [list(q) for q in queries],
        })
        return response["logprobs"]

    def embeddings(self, tokens: Sequence[str] | None = None,
                   export_all: bool = False) -> tuple[list[str], np.ndarray]:
        payload = {"all": True} if export_all else {"tokens": list(tokens or [])}
        response = self.call("embeddings", payload)
        return response["tokens"], np.asarray(response["vectors"], dtype=np.float32)

    def complete(self, prompt: str) -> str:
        return self.call("complete", {"prompt": prompt})["text"]

    def close(self) -> None:
        for stream in (self._writer, self._reader):
            try:
                stream.close()
            except OSError:
                pass
        if self._socket is not None:
            self._socket.close()
        if self._process is not None:
            self._process.wait(timeout=10)


def json_to_prompt(segments: Sequence[Mapping]) -> tuple[ClozePrompt, dict[str, list[float]]]:
    """Decode wire segments back into a ClozePrompt plus pseudoword bindings."""
    decoded: list[Segment] = []
    bindings: dict[str, list[float]] = {}
    mask_count = 0
    for seg in segments:
        kind = seg["kind"]
        if kind == "text":
            decoded.append(Segment("text", text=seg["text"]))
        elif kind == "mask":
            decoded.append(Segment("mask", count=int(seg["count"])))
            mask_count += int(seg["count"])
        elif kind == "soft":
            decoded.append(Segment("soft", text=seg["id"]))
        elif kind == "pseudo":
            decoded.append(Segment("pseudo", text=seg["id"]))
            if seg.get("vector") is not None:
                bindings[seg["id"]] = seg["vector"]
        else:
            raise ValueError(f"unknown segment kind {kind!r}")
    return ClozePrompt(segments=tuple(decoded), mask_count=max(mask_count, 1)), bindings


def serve_loop(backend: Backend, in_stream: IO[str], out_stream: IO[str]) -> None:
    """Expose an in-process backend over the wire protocol until EOF."""
    write_message(out_stream, backend.handshake().to_json())
    while True:
        line = in_stream.readline()
        if not line:
            break
        if not line.strip():
            continue
        request_id = None
        try:
            message = json.loads(line)
            request_id = message.get("id")
            kind = message.get("kind")
            if kind == "shutdown":
                if request_id is not None:
                    write_message(out_stream, {"id": request_id, "ok": True})
                break
            if kind == "tokenize":
                ids, pieces = backend.tokenize(message["surface"])
                response = {"ids": ids, "pieces": pieces}
            elif kind == "logprobs":
                prompt, bindings = json_to_prompt(message["segments"])
                response = {"logprobs": backend.logprobs(prompt, message["queries"], bindings)}
            elif kind == "embeddings":
                tokens, vectors = backend.embeddings(
                    tokens=message.get("tokens"), export_all=bool(message.get("all")))
                response = {"tokens": tokens, "vectors": [[float(v) for v in row]
                                                          for row in vectors]}
            elif kind == "complete":
                response = {"text": backend.complete(message["prompt"])}
            else:
                raise BackendError(f"unknown request kind {kind!r}")
            write_message(out_stream, {"id": request_id, "ok": True, **response})
        except Exception as exc:  # session must survive bad requests
            write_message(out_stream, {"id": request_id, "ok": False, "error": str(exc)})
