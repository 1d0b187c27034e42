"""Wire framing for the operator console link.

Every message is a JSON object {"kind", "version", "data"}. Two transports
share one port: a raw stream frames each message with a 4-byte big-endian
length prefix, and a browser client opens a WebSocket instead; the server
sniffs the first bytes of a connection ("GET " means an HTTP upgrade) and
speaks whichever framing the client chose. The WebSocket side implements just
enough of RFC 6455 for text messages: handshake, masking, ping/pong, close.
"""

from __future__ import annotations

import base64
import hashlib
import json
import struct

PROTOCOL_VERSION = 1
MAX_FRAME = 16 * 1024 * 1024

KINDS = frozenset({
    "state", "height_map", "regions", "body_path", "plan_preview",
    "step_status", "timing", "stats", "command", "command_ack",
})

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


class ProtocolError(RuntimeError):
    pass


def encode_message(kind: str, data, version: int = PROTOCOL_VERSION) -> bytes:
    if kind not in KINDS:
        raise ProtocolError(f"unknown message kind {kind!r}")
    body = json.dumps({"kind": kind, "version": version, "data": data},
                      separators=(",", ":"), sort_keys=True).encode("utf-8")
    if len(body) > MAX_FRAME:
        raise ProtocolError(f"message too large: {len(body)} bytes")
    return struct.pack(">I", len(body)) + body


def decode_payload(body: bytes) -> dict:
    try:
        msg = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise ProtocolError(f"bad message payload: {err}") from err
    if not isinstance(msg, dict) or "kind" not in msg or "data" not in msg:
        raise ProtocolError("message must carry kind and data")
    if msg["kind"] not in KINDS:
        raise ProtocolError(f"unknown message kind {msg['kind']!r}")
    return msg


class StreamFramer:
    """Incremental decoder for length-prefixed frames."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, chunk: bytes) -> list[dict]:
        self._buf.extend(chunk)
        out = []
        while len(self._buf) >= 4:
            (n,) = struct.unpack(">I", self._buf[:4])
            if n > MAX_FRAME:
                raise ProtocolError(f"frame of {n} bytes exceeds limit")
            if len(self._buf) < 4 + n:
                break
            body = bytes(self._buf[4 : 4 + n])
            del self._buf[: 4 + n]
            out.append(decode_payload(body))
        return out


# -- WebSocket ---------------------------------------------------------------


def websocket_accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + _WS_GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def websocket_handshake_response(request: bytes) -> bytes:
    """Build the 101 response for an upgrade request, or raise ProtocolError."""
    try:
        head = request.decode("latin-1")
    except UnicodeDecodeError as err:
        raise ProtocolError("unreadable handshake") from err
    lines = head.split("\r\n")
    if not lines or "GET" not in lines[0]:
        raise ProtocolError("not an HTTP upgrade")
    headers = {}
    for line in lines[1:]:
        if ":" in line:
            k, v = line.split(":", 1)
            headers[k.strip().lower()] = v.strip()
    key = headers.get("sec-websocket-key")
    if not key or "websocket" not in headers.get("upgrade", "").lower():
        raise ProtocolError("missing websocket upgrade headers")
    return (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {websocket_accept_key(key)}\r\n"
        "\r\n"
    ).encode("ascii")


def websocket_encode_text(payload: bytes) -> bytes:
    """Server-to-client unmasked text frame."""
    n = len(payload)
    if n < 126:
        head = struct.pack(">BB", 0x81, n)
    elif n < 65536:
        head = struct.pack(">BBH", 0x81, 126, n)
    else:
        head = struct.pack(">BBQ", 0x81, 127, n)
    return head + payload


def websocket_encode_close(code: int = 1000) -> bytes:
    return struct.pack(">BBH", 0x88, 2, code)


def websocket_encode_pong(payload: bytes = b"") -> bytes:
    return struct.pack(">BB", 0x8A, len(payload)) + payload


class WebSocketFramer:
    """Incremental decoder for client frames. Yields ("text"|"ping"|"close", bytes)."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, chunk: bytes) -> list[tuple[str, bytes]]:
        self._buf.extend(chunk)
        out = []
        while True:
            frame = self._try_frame()
            if frame is None:
                return out
            out.append(frame)

    def _try_frame(self):
        buf = self._buf
        if len(buf) < 2:
            return None
        b0, b1 = buf[0], buf[1]
        if not (b0 & 0x80):
            raise ProtocolError("fragmented websocket frames are not supported")
        opcode = b0 & 0x0F
        masked = bool(b1 & 0x80)
        length = b1 & 0x7F
        pos = 2
        if length == 126:
            if len(buf) < pos + 2:
                return None
            (length,) = struct.unpack(">H", buf[pos : pos + 2])
            pos += 2
        elif length == 127:
            if len(buf) < pos + 8:
                return None
            (length,) = struct.unpack(">Q", buf[pos : pos + 8])
            pos += 8
        if length > MAX_FRAME:
            raise ProtocolError(f"websocket frame of {length} bytes exceeds limit")
        mask = b""
        if masked:
            if len(buf) < pos + 4:
                return None
            mask = bytes(buf[pos : pos + 4])
            pos += 4
        if len(buf) < pos + length:
            return None
        payload = bytes(buf[pos : pos + length])
        del buf[: pos + length]
        if masked:
            payload = bytes(c ^ mask[i % 4] for i, c in enumerate(payload))
        if opcode == 0x1:
            return ("text", payload)
        if opcode == 0x9:
            return ("ping", payload)
        if opcode == 0x8:
            return ("close", payload)
        if opcode in (0x2, 0xA):
            return ("ignore", payload)
        raise ProtocolError(f"unsupported websocket opcode {opcode}")
