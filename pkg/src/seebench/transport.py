"""JSON-lines subprocess transport for out-of-process adapters.

One request per line on the adapter's stdin, one response per line on its
stdout. Every request carries an ``op`` field:

=========  ==============================================================
op         request fields -> response fields
=========  ==============================================================
generate   model_id, prompt, seed, want_attention
           -> payload (inline record) or locator (file path),
              attention: {token: {"h", "w", "data"} | [grid, ...]}
erase      cet_name, base_model_id, targets[], mode -> model_id
classify   verifier_id, payload or locator, labels[] -> scores[]
vqa        verifier_id, payload or locator, question -> answer
embed      model_id, text -> vector[]
=========  ==============================================================

Failures are reported as ``{"error": "..."}``. :func:`serve` runs the
in-process mock stack behind this contract; adapter authors can use it as
a reference implementation.
"""

from __future__ import annotations

import json
import os
import shlex
import subprocess
import sys
import threading
from collections.abc import Mapping, Sequence
from typing import IO, Any

import numpy as np

from .gateway import Capabilities, ImageRecord

ADAPTER_ENV = "SEEBENCH_ADAPTER_CMD"


class TransportError(RuntimeError):
    pass


def resolve_command(command: Sequence[str] | str | None) -> list[str]:
    """Adapter command from config, falling back to ``$SEEBENCH_ADAPTER_CMD``."""
    if not command:
        command = os.environ.get(ADAPTER_ENV, "")
        if not command:
            raise TransportError(f"no adapter command configured and ${ADAPTER_ENV} is unset")
    if isinstance(command, str):
        return shlex.split(command)
    return [str(c) for c in command]


class SubprocessTransport:
    """A long-lived adapter process; calls are serialized by a lock."""

    def __init__(self, command: Sequence[str] | str | None, env: Mapping[str, str] | None = None):
        self.command = resolve_command(command)
        self._env = None if env is None else {**os.environ, **env}
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1, env=self._env,
            )
        return self._proc

    def call(self, message: Mapping[str, Any]) -> dict:
        line = json.dumps(message, sort_keys=True)
        with self._lock:
            proc = self._ensure()
            try:
                proc.stdin.write(line + "\n")
                proc.stdin.flush()
                reply = proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise TransportError(f"adapter {self.command[0]!r} died: {exc}") from exc
        if not reply:
            raise TransportError(f"adapter {self.command[0]!r} closed its output")
        return json.loads(reply)

    def close(self) -> None:
        with self._lock:
            if self._proc is not None and self._proc.poll() is None:
                self._proc.stdin.close()
                try:
                    self._proc.wait(timeout=5)
                except subprocess.TimeoutExpired:
                    self._proc.kill()
            self._proc = None


def _checked(resp: Mapping[str, Any]) -> Mapping[str, Any]:
    if resp.get("error"):
        raise TransportError(str(resp["error"]))
    return resp


def _image_fields(image: ImageRecord) -> dict:
    return {"payload": image.payload} if image.synthetic else {"locator": str(image.payload)}


class RemoteBackend:
    def __init__(self, transport: SubprocessTransport, capabilities: Capabilities):
        self.transport = transport
        self.capabilities = capabilities

    def generate(self, request: Mapping[str, Any]) -> Mapping[str, Any]:
        return self.transport.call({"op": "generate", **request})


class RemoteCET:
    def __init__(self, transport: SubprocessTransport, name: str, settings: Mapping[str, Any] | None = None):
        self.transport = transport
        self.name = name
        self._settings = dict(settings or {})

    def settings(self) -> dict:
        return {"kind": "subprocess", "command": self.transport.command, **self._settings}

    def erase(self, request: Mapping[str, Any]) -> Mapping[str, Any]:
        return _checked(self.transport.call({"op": "erase", **request}))


class RemoteVerifier:
    def __init__(self, transport: SubprocessTransport, verifier_id: str, family: str, version: str = "1"):
        self.transport = transport
        self.verifier_id = verifier_id
        self.family = family
        self.version = version

    def settings(self) -> dict:
        return {"backend": "subprocess", "command": self.transport.command, "family": self.family, "version": self.version}

    def scores(self, image: ImageRecord, labels: Sequence[str]) -> list[float]:
        resp = _checked(self.transport.call(
            {"op": "classify", "verifier_id": self.verifier_id, "labels": list(labels), **_image_fields(image)}
        ))
        return [float(s) for s in resp["scores"]]

    def answer(self, image: ImageRecord, question: str) -> str:
        resp = _checked(self.transport.call(
            {"op": "vqa", "verifier_id": self.verifier_id, "question": question, **_image_fields(image)}
        ))
        return str(resp["answer"])


class RemoteEmbedder:
    def __init__(self, transport: SubprocessTransport, model_id: str):
        self.transport = transport
        self.model_id = model_id

    def embed(self, text: str) -> np.ndarray:
        resp = _checked(self.transport.call({"op": "embed", "model_id": self.model_id, "text": text}))
        return np.asarray(resp["vector"], dtype=np.float64)


def handle_message(message: Mapping[str, Any], backend, cets: Mapping[str, Any], verifiers: Mapping[str, Any], embedder=None) -> dict:
    """Dispatch one wire request to in-process components."""
    op = message.get("op")
    body = {k: v for k, v in message.items() if k != "op"}
    if op == "generate":
        return dict(backend.generate(body))
    if op == "erase":
        cet = cets.get(body.get("cet_name"))
        if cet is None:
            return {"error": f"unknown cet {body.get('cet_name')!r}; registered: {sorted(cets)}"}
        return dict(cet.erase(body))
    if op in ("classify", "vqa"):
        verifier = verifiers.get(body.get("verifier_id"))
        if verifier is None:
            return {"error": f"unknown verifier {body.get('verifier_id')!r}"}
        image = ImageRecord("", 0, "", body.get("payload") or body.get("locator"))
        if op == "classify":
            return {"scores": list(verifier.scores(image, body["labels"]))}
        return {"answer": verifier.answer(image, body["question"])}
    if op == "embed":
        if embedder is None:
            return {"error": "no embedder"}
        return {"vector": [float(x) for x in embedder.embed(body["text"])]}
    return {"error": f"unknown op {op!r}"}


def serve(backend, cets, verifiers, embedder=None, stdin: IO[str] | None = None, stdout: IO[str] | None = None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        try:
            resp = handle_message(json.loads(line), backend, cets, verifiers, embedder)
        except Exception as exc:  # reported to the caller, never fatal to the server
            resp = {"error": f"{type(exc).__name__}: {exc}"}
        stdout.write(json.dumps(resp, sort_keys=True) + "\n")
        stdout.flush()
