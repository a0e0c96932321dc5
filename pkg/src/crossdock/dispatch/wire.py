"""Length-prefixed JSON wire protocol for master-worker dispatch.

Framing: a 4-byte big-endian unsigned payload length, then the UTF-8 JSON
payload. Every message is an object with a "type" field from {HELLO,
REQUEST, ASSIGN, RESULT, NO_MORE_TASKS, SHUTDOWN} and "v": 1.
"""

from __future__ import annotations

import json
import socket
import struct
from dataclasses import dataclass

from ..docking import DockingResult
from ..errors import WireError
from .tasks import DockingTask

__all__ = [
    "PROTOCOL_VERSION",
    "MAX_FRAME_BYTES",
    "Hello",
    "Request",
    "Assign",
    "Result",
    "NoMoreTasks",
    "Shutdown",
    "Message",
    "encode_message",
    "decode_message",
    "send_message",
    "recv_message",
]

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 256 * 1024 * 1024  # sanity bound against corrupt prefixes

_LEN = struct.Struct(">I")


@dataclass(frozen=True)
class Hello:
    worker_id: str
    slots: int


@dataclass(frozen=True)
class Request:
    worker_id: str


@dataclass(frozen=True)
class Assign:
    task: DockingTask


@dataclass(frozen=True)
class Result:
    task_id: str
    result: DockingResult


@dataclass(frozen=True)
class NoMoreTasks:
    pass


@dataclass(frozen=True)
class Shutdown:
    pass


Message = Hello | Request | Assign | Result | NoMoreTasks | Shutdown


def _payload(msg: Message) -> dict:
    if isinstance(msg, Hello):
        return {"type": "HELLO", "worker_id": msg.worker_id, "slots": msg.slots}
    if isinstance(msg, Request):
        return {"type": "REQUEST", "worker_id": msg.worker_id}
    if isinstance(msg, Assign):
        return {"type": "ASSIGN", "task": msg.task.to_dict()}
    if isinstance(msg, Result):
        return {"type": "RESULT", "task_id": msg.task_id, "result": msg.result.to_dict()}
    if isinstance(msg, NoMoreTasks):
        return {"type": "NO_MORE_TASKS"}
    if isinstance(msg, Shutdown):
        return {"type": "SHUTDOWN"}
    raise WireError(f"unknown message {msg!r}")


def encode_message(msg: Message) -> bytes:
    body = _payload(msg)
    body["v"] = PROTOCOL_VERSION
    payload = json.dumps(body, separators=(",", ":")).encode("utf-8")
    return _LEN.pack(len(payload)) + payload


def decode_message(payload: bytes) -> Message:
    try:
        body = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WireError(f"undecodable payload: {exc}") from None
    if not isinstance(body, dict):
        raise WireError(f"payload is not an object: {body!r}")
    version = body.get("v")
    if version != PROTOCOL_VERSION:
        raise WireError(f"unsupported protocol version {version!r}")
    kind = body.get("type")
    try:
        if kind == "HELLO":
            return Hello(worker_id=str(body["worker_id"]), slots=int(body["slots"]))
        if kind == "REQUEST":
            return Request(worker_id=str(body["worker_id"]))
        if kind == "ASSIGN":
            return Assign(task=DockingTask.from_dict(body["task"]))
        if kind == "RESULT":
            return Result(
                task_id=str(body["task_id"]),
                result=DockingResult.from_dict(body["result"]),
            )
        if kind == "NO_MORE_TASKS":
            return NoMoreTasks()
        if kind == "SHUTDOWN":
            return Shutdown()
    except (KeyError, TypeError, ValueError) as exc:
        raise WireError(f"malformed {kind} message: {exc}") from None
    raise WireError(f"unknown message type {kind!r}")


def send_message(sock: socket.socket, msg: Message) -> None:
    sock.sendall(encode_message(msg))


def _recv_exact(sock: socket.socket, count: int) -> bytes | None:
    chunks = []
    got = 0
    while got < count:
        chunk = sock.recv(count - got)
        if not chunk:
            return None
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def recv_message(sock: socket.socket) -> Message | None:
    """Read one framed message; None on clean EOF before a frame starts."""
    header = _recv_exact(sock, _LEN.size)
    if header is None:
        return None
    (length,) = _LEN.unpack(header)
    if length > MAX_FRAME_BYTES:
        raise WireError(f"frame of {length} bytes exceeds the {MAX_FRAME_BYTES} cap")
    payload = _recv_exact(sock, length)
    if payload is None:
        raise WireError("connection closed mid-frame")
    return decode_message(payload)
