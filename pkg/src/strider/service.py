"""Socket service wrapping one engine instance.

The simulation advances only on the serve thread; client readers never touch
the engine directly, they enqueue commands that run at the next tick boundary.
Outbound traffic goes through per-client queues with a writer thread each, so
a stalled console cannot stall the walk. Both framings (length-prefixed and
WebSocket) are accepted on the same port.
"""

from __future__ import annotations

import json
import queue
import socket
import threading
import time

from .engine import BehaviorEngine
from .protocol import (MAX_FRAME, ProtocolError, StreamFramer, WebSocketFramer,
                       encode_message, websocket_encode_close, websocket_encode_pong,
                       websocket_encode_text, websocket_handshake_response)

_SNAPSHOT_KINDS = ("state", "height_map", "regions", "body_path", "plan_preview")
_OUTBOX_LIMIT = 256


class _Client:
    def __init__(self, sock: socket.socket, addr, is_websocket: bool):
        self.sock = sock
        self.addr = addr
        self.is_websocket = is_websocket
        self.outbox: queue.Queue = queue.Queue(maxsize=_OUTBOX_LIMIT)
        self.alive = True

    def send_later(self, frame: bytes) -> None:
        try:
            self.outbox.put_nowait(frame)
        except queue.Full:
            self.alive = False  # too far behind; writer thread will close

    def encode(self, kind: str, data) -> bytes:
        raw = encode_message(kind, data)
        if self.is_websocket:
            return websocket_encode_text(raw[4:])
        return raw


class WalkService:
    def __init__(self, engine: BehaviorEngine, port: int = 8732,
                 host: str = "127.0.0.1", realtime_factor: float = 1.0):
        self.engine = engine
        self.host = host
        self.port = port
        self.realtime_factor = realtime_factor
        self._clients: list[_Client] = []
        self._lock = threading.Lock()
        self._server: socket.socket | None = None
        self._stop = threading.Event()
        self._last_by_kind: dict[str, bytes] = {}
        engine.subscribe(self._on_event)

    # -- engine events ---------------------------------------------------------

    def _on_event(self, kind: str, sim_time: float, data) -> None:
        if kind not in ("state", "height_map", "regions", "body_path",
                        "plan_preview", "step_status", "timing", "stats",
                        "command_ack"):
            return
        payload = dict(data) if isinstance(data, dict) else {"value": data}
        payload["t"] = round(sim_time, 4)
        raw = encode_message(kind, payload)
        if kind in _SNAPSHOT_KINDS:
            self._last_by_kind[kind] = raw
        with self._lock:
            clients = list(self._clients)
        for c in clients:
            frame = websocket_encode_text(raw[4:]) if c.is_websocket else raw
            c.send_later(frame)

    # -- client handling ---------------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                sock, addr = self._server.accept()
            except OSError:
                return
            threading.Thread(target=self._client_session, args=(sock, addr),
                             daemon=True).start()

    def _client_session(self, sock: socket.socket, addr) -> None:
        sock.settimeout(10.0)
        try:
            first = sock.recv(4, socket.MSG_PEEK)
        except OSError:
            sock.close()
            return
        is_ws = first.startswith(b"GET")
        if is_ws:
            request = b""
            try:
                while b"\r\n\r\n" not in request:
                    chunk = sock.recv(4096)
                    if not chunk:
                        sock.close()
                        return
                    request += chunk
                    if len(request) > 65536:
                        sock.close()
                        return
                sock.sendall(websocket_handshake_response(request))
            except (OSError, ProtocolError):
                sock.close()
                return
        sock.settimeout(None)

        client = _Client(sock, addr, is_ws)
        with self._lock:
            self._clients.append(client)
        threading.Thread(target=self._writer_loop, args=(client,), daemon=True).start()
        for raw in self._last_by_kind.values():
            client.send_later(websocket_encode_text(raw[4:]) if is_ws else raw)
        self._reader_loop(client)

    def _reader_loop(self, client: _Client) -> None:
        framer = WebSocketFramer() if client.is_websocket else StreamFramer()
        try:
            while client.alive and not self._stop.is_set():
                chunk = client.sock.recv(65536)
                if not chunk:
                    break
                if client.is_websocket:
                    for kind, payload in framer.feed(chunk):
                        if kind == "text":
                            self._handle_inbound(payload)
                        elif kind == "ping":
                            client.send_later(websocket_encode_pong(payload))
                        elif kind == "close":
                            client.send_later(websocket_encode_close())
                            client.alive = False
                else:
                    for msg in framer.feed(chunk):
                        self._dispatch(msg)
        except (OSError, ProtocolError):
            pass
        finally:
            self._drop_client(client)

    def _handle_inbound(self, payload: bytes) -> None:
        if len(payload) > MAX_FRAME:
            return
        try:
            msg = json.loads(payload.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            return
        if isinstance(msg, dict):
            self._dispatch(msg)

    def _dispatch(self, msg: dict) -> None:
        if msg.get("kind") == "command" and isinstance(msg.get("data"), dict):
            self.engine.enqueue_command(msg["data"])

    def _writer_loop(self, client: _Client) -> None:
        try:
            while client.alive and not self._stop.is_set():
                try:
                    frame = client.outbox.get(timeout=0.25)
                except queue.Empty:
                    continue
                client.sock.sendall(frame)
        except OSError:
            pass
        finally:
            self._drop_client(client)

    def _drop_client(self, client: _Client) -> None:
        client.alive = False
        with self._lock:
            if client in self._clients:
                self._clients.remove(client)
        try:
            client.sock.close()
        except OSError:
            pass

    # -- lifecycle ---------------------------------------------------------------

    def start(self) -> None:
        self._server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._server.bind((self.host, self.port))
        self.port = self._server.getsockname()[1]
        self._server.listen(8)
        threading.Thread(target=self._accept_loop, daemon=True).start()

    def serve_forever(self) -> None:
        """Run the lockstep clock, pacing wall time by the realtime factor."""
        if self._server is None:
            self.start()
        self.engine.start()
        dt = self.engine.config.timing.dt
        wall_start = time.perf_counter()
        sim_start = self.engine.sim_time
        try:
            while not self._stop.is_set():
                self.engine.tick()
                if self.realtime_factor > 0.0:
                    target = wall_start + \
                        (self.engine.sim_time - sim_start) / self.realtime_factor
                    lag = target - time.perf_counter()
                    if lag > 0:
                        time.sleep(min(lag, dt * 25))
        finally:
            self.close()

    def stop(self) -> None:
        self._stop.set()

    def close(self) -> None:
        self._stop.set()
        if self._server is not None:
            try:
                self._server.close()
            except OSError:
                pass
        with self._lock:
            clients = list(self._clients)
        for c in clients:
            self._drop_client(c)
        self.engine.close()
