"""Minimal threaded WebSocket (RFC 6455) framing for the browser endpoint.

The streaming core is byte-oriented; browsers cannot speak raw TCP, so the
server exposes a second port that carries the exact same message bytes, one
message per WebSocket binary frame.  Only what the viewer needs is
implemented: the upgrade handshake, binary/ping/pong/close frames, and a
tiny static-file responder so the same port can serve the viewer app.
"""

from __future__ import annotations

import base64
import hashlib
import os
import secrets
import struct
from pathlib import Path

_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
MAX_MESSAGE_BYTES = 64 * 2**20

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
    ".png": "image/png",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
    ".csv": "text/csv",
}


class WsProtocolError(ConnectionError):
    """The peer violated the WebSocket framing rules."""


class SockReader:
    """Buffered exact-length reads over a socket."""

    def __init__(self, sock):
        self.sock = sock
        self._buf = bytearray()

    def read_exact(self, n: int) -> bytes:
        while len(self._buf) < n:
            chunk = self.sock.recv(65536)
            if not chunk:
                raise EOFError("connection closed")
            self._buf.extend(chunk)
        out = bytes(self._buf[:n])
        del self._buf[:n]
        return out

    def read_until(self, marker: bytes, limit: int = 65536) -> bytes:
        while marker not in self._buf:
            if len(self._buf) > limit:
                raise WsProtocolError("header too large")
            chunk = self.sock.recv(65536)
            if not chunk:
                raise EOFError("connection closed")
            self._buf.extend(chunk)
        idx = self._buf.index(marker) + len(marker)
        out = bytes(self._buf[:idx])
        del self._buf[:idx]
        return out


def _parse_request(raw: bytes) -> tuple[str, str, dict[str, str]]:
    text = raw.decode("latin-1")
    lines = text.split("\r\n")
    parts = lines[0].split()
    if len(parts) < 2:
        raise WsProtocolError(f"bad request line: {lines[0]!r}")
    headers: dict[str, str] = {}
    for line in lines[1:]:
        if ":" in line:
            key, _, value = line.partition(":")
            headers[key.strip().lower()] = value.strip()
    return parts[0], parts[1], headers


def accept_http(reader: SockReader, viewer_dir: Path | None = None) -> bool:
    """Handle the opening HTTP exchange on the browser port.

    Returns True when the connection upgraded to a WebSocket; False when a
    plain HTTP request was answered (static file or error) and the
    connection should be closed.
    """
    raw = reader.read_until(b"\r\n\r\n")
    method, path, headers = _parse_request(raw)
    key = headers.get("sec-websocket-key")
    if "websocket" in headers.get("upgrade", "").lower() and key:
        accept = base64.b64encode(hashlib.sha1((key + _GUID).encode()).digest()).decode()
        reader.sock.sendall(
            (
                "HTTP/1.1 101 Switching Protocols\r\n"
                "Upgrade: websocket\r\n"
                "Connection: Upgrade\r\n"
                f"Sec-WebSocket-Accept: {accept}\r\n\r\n"
            ).encode()
        )
        return True
    _serve_static(reader.sock, method, path, viewer_dir)
    return False


def _serve_static(sock, method: str, path: str, viewer_dir: Path | None) -> None:
    def respond(status: str, body: bytes, ctype: str = "text/plain; charset=utf-8") -> None:
        head = (
            f"HTTP/1.1 {status}\r\n"
            f"Content-Type: {ctype}\r\n"
            f"Content-Length: {len(body)}\r\n"
            "Connection: close\r\n\r\n"
        ).encode()
        sock.sendall(head + body)

    if method != "GET" or viewer_dir is None:
        respond("404 Not Found", b"no viewer configured\n")
        return
    rel = path.split("?", 1)[0].lstrip("/") or "index.html"
    root = Path(viewer_dir).resolve()
    target = (root / rel).resolve()
    if not str(target).startswith(str(root) + os.sep) and target != root:
        respond("403 Forbidden", b"forbidden\n")
        return
    if target.is_dir():
        target = target / "index.html"
    if not target.is_file():
        respond("404 Not Found", b"not found\n")
        return
    ctype = _CONTENT_TYPES.get(target.suffix.lower(), "application/octet-stream")
    respond("200 OK", target.read_bytes(), ctype)


def send_binary(sock, payload: bytes, *, mask: bool = False) -> None:
    """Send one binary message (single unfragmented frame)."""
    sock.sendall(_build_frame(0x2, payload, mask=mask))


def send_close(sock, *, mask: bool = False) -> None:
    try:
        sock.sendall(_build_frame(0x8, b"", mask=mask))
    except OSError:
        pass


def _build_frame(opcode: int, payload: bytes, *, mask: bool) -> bytes:
    header = bytearray([0x80 | opcode])
    n = len(payload)
    mask_bit = 0x80 if mask else 0
    if n < 126:
        header.append(mask_bit | n)
    elif n < 65536:
        header.append(mask_bit | 126)
        header += struct.pack(">H", n)
    else:
        header.append(mask_bit | 127)
        header += struct.pack(">Q", n)
    if mask:
        key = secrets.token_bytes(4)
        header += key
        payload = _apply_mask(payload, key)
    return bytes(header) + payload


def _apply_mask(payload: bytes, key: bytes) -> bytes:
    reps = len(payload) // 4 + 1
    keystream = (key * reps)[: len(payload)]
    return (int.from_bytes(payload, "little") ^ int.from_bytes(keystream, "little")).to_bytes(
        len(payload), "little"
    )


def read_message(reader: SockReader) -> bytes | None:
    """Read one complete binary/text message; None when the peer closed.

    Ping frames are answered in place; fragmented messages are reassembled.
    """
    parts: list[bytes] = []
    while True:
        b1, b2 = reader.read_exact(2)
        fin = b1 & 0x80
        opcode = b1 & 0x0F
        masked = b2 & 0x80
        n = b2 & 0x7F
        if n == 126:
            (n,) = struct.unpack(">H", reader.read_exact(2))
        elif n == 127:
            (n,) = struct.unpack(">Q", reader.read_exact(8))
        if n > MAX_MESSAGE_BYTES:
            raise WsProtocolError(f"message of {n} bytes exceeds the 64 MiB cap")
        key = reader.read_exact(4) if masked else None
        payload = reader.read_exact(n)
        if key:
            payload = _apply_mask(payload, key)
        if opcode == 0x8:  # close
            send_close(reader.sock)
            return None
        if opcode == 0x9:  # ping
            reader.sock.sendall(_build_frame(0xA, payload, mask=False))
            continue
        if opcode == 0xA:  # pong
            continue
        parts.append(payload)
        if sum(len(p) for p in parts) > MAX_MESSAGE_BYTES:
            raise WsProtocolError("fragmented message exceeds the 64 MiB cap")
        if fin:
            return b"".join(parts)


def client_handshake(sock, host: str, path: str = "/") -> SockReader:
    """Client side of the upgrade (used by tests and tools).

    Returns the reader to keep using; it may already hold buffered bytes.
    """
    key = base64.b64encode(secrets.token_bytes(16)).decode()
    sock.sendall(
        (
            f"GET {path} HTTP/1.1\r\n"
            f"Host: {host}\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Key: {key}\r\n"
            "Sec-WebSocket-Version: 13\r\n\r\n"
        ).encode()
    )
    reader = SockReader(sock)
    response = reader.read_until(b"\r\n\r\n")
    if b" 101 " not in response.split(b"\r\n", 1)[0]:
        raise WsProtocolError("server refused the WebSocket upgrade")
    expected = base64.b64encode(hashlib.sha1((key + _GUID).encode()).digest())
    if expected not in response:
        raise WsProtocolError("bad Sec-WebSocket-Accept")
    return reader
