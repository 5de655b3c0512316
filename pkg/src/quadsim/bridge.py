"""Framed local-socket protocol exposing the batched environment.

Every message is one frame: u32 little-endian payload length, then the
payload (u8 message type + body).  One client session at a time; the
session maps 1:1 onto VecEnv.reset/step so a remote episode is bitwise
identical to an in-process one.  Field-by-field byte layout lives in
docs/file-formats.md.
"""

from __future__ import annotations

import hashlib
import json
import socket
import struct

import numpy as np

from .env import VecEnv

PROTOCOL_VERSION = 1
MAX_FRAME = 64 * 1024 * 1024

MSG_HELLO = 1
MSG_RESET = 2
MSG_STEP = 3
MSG_CLOSE = 4
MSG_HELLO_ACK = 129
MSG_OBS = 130
MSG_STEP_RESULT = 131
MSG_CLOSE_ACK = 132
MSG_ERROR = 255

ERR_VERSION = 1
ERR_FRAME = 2
ERR_SHAPE = 3
ERR_INTERNAL = 4


def config_hash(cfg: dict) -> bytes:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).digest()


def send_frame(sock: socket.socket, payload: bytes) -> None:
    sock.sendall(struct.pack("<I", len(payload)) + payload)


def recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed")
        buf += chunk
    return buf


def recv_frame(sock: socket.socket) -> bytes:
    header = recv_exact(sock, 4)
    (length,) = struct.unpack("<I", header)
    if length == 0 or length > MAX_FRAME:
        raise ValueError(f"bad frame length {length}")
    return recv_exact(sock, length)


def _error_frame(code: int, message: str) -> bytes:
    body = message.encode()
    return struct.pack("<BH", MSG_ERROR, code) + body


class BridgeServer:
    """Serves one VecEnv over a local TCP socket, one session at a time."""

    def __init__(self, cfg: dict, host: str = "127.0.0.1", port: int = 0):
        self.cfg = cfg
        self.env = VecEnv(cfg)
        self._hash = config_hash(cfg)
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(1)
        self._running = True

    @property
    def address(self):
        return self._listener.getsockname()

    def shutdown(self) -> None:
        self._running = False
        try:
            self._listener.close()
        except OSError:
            pass

    def serve_forever(self, max_sessions: int | None = None) -> None:
        sessions = 0
        while self._running:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                break
            with conn:
                self._serve_session(conn)
            sessions += 1
            if max_sessions is not None and sessions >= max_sessions:
                break

    def _serve_session(self, conn: socket.socket) -> None:
        while True:
            try:
                frame = recv_frame(conn)
            except (ConnectionError, ValueError):
                return
            try:
                reply = self._dispatch(frame)
            except Exception as exc:  # protocol errors must not kill the server
                try:
                    send_frame(conn, _error_frame(ERR_INTERNAL, str(exc)))
                except OSError:
                    pass
                return
            try:
                send_frame(conn, reply)
            except OSError:
                return
            if reply[0] in (MSG_CLOSE_ACK, MSG_ERROR):
                return

    def _dispatch(self, frame: bytes) -> bytes:
        env = self.env
        msg = frame[0]
        body = frame[1:]
        if msg == MSG_HELLO:
            if len(body) != 2:
                return _error_frame(ERR_FRAME, "hello body must be u16 version")
            (version,) = struct.unpack("<H", body)
            if version != PROTOCOL_VERSION:
                return _error_frame(ERR_VERSION, f"unsupported version {version}")
            return (
                struct.pack("<BH", MSG_HELLO_ACK, PROTOCOL_VERSION)
                + self._hash
                + struct.pack("<III", env.n, env.obs_dim, env.act_dim)
            )
        if msg == MSG_RESET:
            if len(body) < 4:
                return _error_frame(ERR_FRAME, "reset body too short")
            (count,) = struct.unpack("<I", body[:4])
            if len(body) != 4 + 4 * count:
                return _error_frame(ERR_FRAME, "reset id list length mismatch")
            if count == 0:
                ids = np.arange(env.n)
            else:
                ids = np.frombuffer(body[4:], dtype="<u4").astype(int)
                if ids.size and (ids.min() < 0 or ids.max() >= env.n):
                    return _error_frame(ERR_SHAPE, "reset id out of range")
            obs = env.reset(ids)
            return (
                struct.pack("<BI", MSG_OBS, len(ids))
                + obs.astype("<f4").tobytes(order="C")
            )
        if msg == MSG_STEP:
            expect = 4 * env.n * env.act_dim
            if len(body) != expect:
                return _error_frame(
                    ERR_SHAPE, f"step payload must be {expect} bytes, got {len(body)}"
                )
            actions = np.frombuffer(body, dtype="<f4").reshape(env.n, env.act_dim)
            result = env.step(actions.astype(float))
            outcome = np.array(
                [o.value for o in result.info["outcome"]], dtype="<u1"
            )
            return (
                struct.pack("<B", MSG_STEP_RESULT)
                + result.obs.astype("<f4").tobytes(order="C")
                + result.reward.astype("<f4").tobytes(order="C")
                + result.done.astype("<u1").tobytes(order="C")
                + outcome.tobytes(order="C")
                + result.info["episode_step"].astype("<u4").tobytes(order="C")
            )
        if msg == MSG_CLOSE:
            return struct.pack("<B", MSG_CLOSE_ACK)
        return _error_frame(ERR_FRAME, f"unknown message type {msg}")


def serve(cfg: dict, host: str = "127.0.0.1", port: int = 5555,
          max_sessions: int | None = None) -> None:
    server = BridgeServer(cfg, host, port)
    print(f"bridge listening on {server.address[0]}:{server.address[1]}", flush=True)
    try:
        server.serve_forever(max_sessions=max_sessions)
    finally:
        server.shutdown()
