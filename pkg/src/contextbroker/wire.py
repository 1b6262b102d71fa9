"""Wire protocol for out-of-process behavior mechanisms.

Messages are length-prefixed (4-byte big-endian) UTF-8 JSON frames exchanged
over stdin/stdout (external commands) or as HTTP request/response bodies
(endpoint mechanisms). One request frame yields one reply frame:

    PROBE  {behavior, params}          -> NEEDS {labels} | RESULT {mime, body}
    SUPPLY {behavior, params, inputs}  -> RESULT {mime, body} | FAULT {message}

Binary bodies travel base64-encoded. Run ``python -m contextbroker.wire
<builtin>`` to serve a builtin mechanism over stdio.
"""

from __future__ import annotations

import base64
import json
import struct
import sys
from typing import BinaryIO, Mapping

from .invocation import Content, InvokeReply, MechanismError, NeedsInput, Result, BehaviorResult

_LEN = struct.Struct(">I")


class WireError(Exception):
    """A frame or message that does not follow the protocol."""


def encode_frame(message: dict) -> bytes:
    payload = json.dumps(message, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _LEN.pack(len(payload)) + payload


def decode_frame(buffer: bytes) -> dict:
    """Decode the first frame in a byte buffer (trailing bytes are ignored)."""
    if len(buffer) < _LEN.size:
        raise WireError("truncated frame: missing length prefix")
    (length,) = _LEN.unpack(buffer[: _LEN.size])
    payload = buffer[_LEN.size : _LEN.size + length]
    if len(payload) < length:
        raise WireError("truncated frame: payload shorter than declared length")
    try:
        message = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WireError(f"frame payload is not JSON: {exc}") from None
    if not isinstance(message, dict) or "type" not in message:
        raise WireError("frame payload is not a typed message object")
    return message


def read_frame(stream: BinaryIO) -> dict | None:
    """Read one frame from a stream; None at EOF."""
    header = stream.read(_LEN.size)
    if not header:
        return None
    if len(header) < _LEN.size:
        raise WireError("truncated frame: missing length prefix")
    (length,) = _LEN.unpack(header)
    payload = stream.read(length)
    return decode_frame(header + payload)


def probe_message(behavior: str, params: Mapping[str, object]) -> dict:
    return {"type": "PROBE", "behavior": behavior, "params": dict(params)}


def supply_message(
    behavior: str, params: Mapping[str, object], inputs: Mapping[str, Content]
) -> dict:
    return {
        "type": "SUPPLY",
        "behavior": behavior,
        "params": dict(params),
        "inputs": {
            label: {
                "mime": content.mime,
                "body": base64.b64encode(content.body).decode("ascii"),
                "url": content.url,
            }
            for label, content in inputs.items()
        },
    }


def reply_to_message(reply: InvokeReply) -> dict:
    if isinstance(reply, NeedsInput):
        return {"type": "NEEDS", "labels": list(reply.labels)}
    return {
        "type": "RESULT",
        "mime": reply.result.mime,
        "body": base64.b64encode(reply.result.body).decode("ascii"),
    }


def fault_message(message: str) -> dict:
    return {"type": "FAULT", "message": message}


def message_to_reply(message: dict) -> InvokeReply:
    """Interpret a reply frame; FAULT raises MechanismError."""
    kind = message.get("type")
    if kind == "NEEDS":
        labels = message.get("labels")
        if not isinstance(labels, list) or not all(isinstance(x, str) for x in labels):
            raise WireError("NEEDS reply must carry a list of label strings")
        return NeedsInput(tuple(labels))
    if kind == "RESULT":
        mime = message.get("mime")
        body = message.get("body")
        if not isinstance(mime, str) or not isinstance(body, str):
            raise WireError("RESULT reply must carry mime and base64 body strings")
        try:
            raw = base64.b64decode(body, validate=True)
        except Exception as exc:
            raise WireError(f"RESULT body is not base64: {exc}") from None
        return Result(BehaviorResult(mime, raw))
    if kind == "FAULT":
        raise MechanismError(str(message.get("message", "mechanism fault")))
    raise WireError(f"unexpected reply type {kind!r}")


def decode_inputs(raw: Mapping[str, dict]) -> dict[str, Content]:
    inputs: dict[str, Content] = {}
    for label, item in raw.items():
        try:
            body = base64.b64decode(item["body"], validate=True)
            mime = item["mime"]
        except (KeyError, Exception) as exc:  # noqa: B014 - normalize all decode errors
            raise WireError(f"bad input for label {label!r}: {exc}") from None
        inputs[label] = Content(body=body, mime=mime, url=item.get("url"))
    return inputs


def handle_message(mechanism, message: dict) -> dict:
    """Apply one request frame to a mechanism and build the reply frame."""
    kind = message.get("type")
    if kind not in ("PROBE", "SUPPLY"):
        return fault_message(f"unexpected request type {kind!r}")
    behavior = message.get("behavior", "")
    params = message.get("params") or {}
    try:
        if kind == "PROBE":
            reply = mechanism.invoke(behavior, params, {})
        else:
            inputs = decode_inputs(message.get("inputs") or {})
            reply = mechanism.invoke(behavior, params, inputs)
        return reply_to_message(reply)
    except MechanismError as exc:
        return fault_message(str(exc))
    except WireError as exc:
        return fault_message(str(exc))


def serve(mechanism, stdin: BinaryIO, stdout: BinaryIO) -> None:
    """Answer request frames until EOF."""
    while True:
        try:
            message = read_frame(stdin)
        except WireError as exc:
            stdout.write(encode_frame(fault_message(str(exc))))
            stdout.flush()
            return
        if message is None:
            return
        stdout.write(encode_frame(handle_message(mechanism, message)))
        stdout.flush()


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    from .mechanisms import BUILTINS

    if len(argv) != 1 or argv[0] not in BUILTINS:
        print(f"usage: python -m contextbroker.wire {{{'|'.join(BUILTINS)}}}", file=sys.stderr)
        return 2
    serve(BUILTINS[argv[0]], sys.stdin.buffer, sys.stdout.buffer)
    return 0


if __name__ == "__main__":
    sys.exit(main())
