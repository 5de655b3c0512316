"""Client side of the simulator's framed local-socket protocol.

Implements the wire format documented in the simulator's
docs/file-formats.md from scratch (the trainer talks to the simulator
only over this socket): u32 length-prefixed frames, u8 message type,
little-endian integers, float32 row-major arrays.
"""

from __future__ import annotations

import socket
import struct
import subprocess
import sys
import time

import numpy as np

PROTOCOL_VERSION = 1

MSG_HELLO = 1
MSG_RESET = 2
MSG_STEP = 3
MSG_CLOSE = 4
MSG_HELLO_ACK = 129
MSG_OBS = 130
MSG_STEP_RESULT = 131
MSG_CLOSE_ACK = 132
MSG_ERROR = 255


class ProtocolError(RuntimeError):
    pass


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ProtocolError("server closed the connection")
        buf += chunk
    return buf


class BridgeClient:
    """Blocking vector-environment client: reset/step mirror the simulator."""

    def __init__(self, address, timeout: float = 60.0):
        host, port = address
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.sock.settimeout(timeout)
        reply = self._request(struct.pack("<BH", MSG_HELLO, PROTOCOL_VERSION))
        if reply[0] != MSG_HELLO_ACK:
            raise ProtocolError(f"handshake rejected: {reply!r}")
        (version,) = struct.unpack("<H", reply[1:3])
        if version != PROTOCOL_VERSION:
            raise ProtocolError(f"server speaks version {version}")
        self.config_hash = reply[3:35]
        self.n_envs, self.obs_dim, self.act_dim = struct.unpack("<III", reply[35:47])

    def _request(self, payload: bytes) -> bytes:
        self.sock.sendall(struct.pack("<I", len(payload)) + payload)
        (length,) = struct.unpack("<I", _recv_exact(self.sock, 4))
        reply = _recv_exact(self.sock, length)
        if reply[0] == MSG_ERROR:
            (code,) = struct.unpack("<H", reply[1:3])
            raise ProtocolError(f"server error {code}: {reply[3:].decode()}")
        return reply

    def reset(self, ids=None) -> np.ndarray:
        if ids is None:
            body = struct.pack("<BI", MSG_RESET, 0)
            count = self.n_envs
        else:
            ids = np.asarray(ids, dtype="<u4")
            body = struct.pack("<BI", MSG_RESET, len(ids)) + ids.tobytes()
            count = len(ids)
        reply = self._request(body)
        if reply[0] != MSG_OBS:
            raise ProtocolError(f"unexpected reply {reply[0]}")
        (got,) = struct.unpack("<I", reply[1:5])
        if got != count:
            raise ProtocolError(f"reset returned {got} rows, expected {count}")
        obs = np.frombuffer(reply[5:], dtype="<f4").reshape(count, self.obs_dim)
        return obs.copy()

    def step(self, actions: np.ndarray):
        actions = np.ascontiguousarray(actions, dtype="<f4")
        if actions.shape != (self.n_envs, self.act_dim):
            raise ValueError(
                f"actions must be {(self.n_envs, self.act_dim)}, got {actions.shape}"
            )
        reply = self._request(struct.pack("<B", MSG_STEP) + actions.tobytes(order="C"))
        if reply[0] != MSG_STEP_RESULT:
            raise ProtocolError(f"unexpected reply {reply[0]}")
        n, od = self.n_envs, self.obs_dim
        off = 1
        obs = np.frombuffer(reply[off:off + 4 * n * od], dtype="<f4").reshape(n, od)
        off += 4 * n * od
        reward = np.frombuffer(reply[off:off + 4 * n], dtype="<f4")
        off += 4 * n
        done = np.frombuffer(reply[off:off + n], dtype="<u1").astype(bool)
        off += n
        outcome = np.frombuffer(reply[off:off + n], dtype="<u1")
        off += n
        episode_step = np.frombuffer(reply[off:off + 4 * n], dtype="<u4")
        info = {"outcome": outcome.copy(), "episode_step": episode_step.copy()}
        return obs.copy(), reward.copy(), done.copy(), info

    def close(self) -> None:
        try:
            self._request(struct.pack("<B", MSG_CLOSE))
        except (ProtocolError, OSError):
            pass
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class SimulatorProcess:
    """Launches `quadsim serve` as a subprocess and exposes its address."""

    def __init__(self, port: int, config_path=None, seed=None, max_sessions=1,
                 extra_args=()):
        cmd = [sys.executable, "-m", "quadsim.cli"]
        if config_path:
            cmd += ["--config", str(config_path)]
        cmd += ["serve", "--port", str(port)]
        if max_sessions is not None:
            cmd += ["--max-sessions", str(max_sessions)]
        if seed is not None:
            cmd += ["--seed", str(seed)]
        cmd += list(extra_args)
        self.proc = subprocess.Popen(
            cmd, stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True
        )
        line = self.proc.stdout.readline()
        if "listening" not in line:
            rest = self.proc.stdout.read()
            raise RuntimeError(f"simulator failed to start: {line}{rest}")
        self.address = ("127.0.0.1", port)

    def connect(self, timeout: float = 60.0, retries: int = 20) -> BridgeClient:
        last = None
        for _ in range(retries):
            try:
                return BridgeClient(self.address, timeout=timeout)
            except OSError as exc:
                last = exc
                time.sleep(0.1)
        raise RuntimeError(f"could not reach simulator: {last}")

    def shutdown(self) -> None:
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()
