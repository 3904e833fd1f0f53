"""Out-of-process decoders and purifiers over a byte stream.

Wire format (all little-endian):
  handshake  sidecar -> client: b"ZBWM", u16 version, u16 M
  request    client -> sidecar: u32 height, u32 width, u32 channels, then
             height*width*channels float32 values, channel-planar
  response   sidecar -> client: M float32 values

A sidecar announcing ``M = 0`` is a purifier and answers every request with a
raw tensor (same header + data layout as the request).

The transport is either a spawned child process (its stdin/stdout) or a TCP
connection. One request is in flight per connection.
"""
from __future__ import annotations

import os
import select
import shlex
import socket
import struct
import subprocess
import time

import numpy as np

from .errors import DimensionError, SidecarError, SidecarTimeout
from .imagecore import RAW_HEADER, as_image, decode_raw_tensor, encode_raw_tensor

MAGIC = b"ZBWM"
VERSION = 1
HANDSHAKE = struct.Struct("<4sHH")
DEFAULT_DEADLINE = 30.0
ENV_COMMAND = "ZBWM_SIDECAR_CMD"


class _Stream:
    """Deadline-aware exact reads and writes on a process pipe pair or socket."""

    def __init__(self, read_fd: int, write, close):
        self._fd = read_fd
        self._write = write
        self._close = close

    def read_exact(self, n: int, deadline: float) -> bytes:
        buf = bytearray()
        end = time.monotonic() + deadline
        while len(buf) < n:
            left = end - time.monotonic()
            if left <= 0:
                raise SidecarTimeout(f"sidecar did not answer within {deadline:g} s")
            ready, _, _ = select.select([self._fd], [], [], left)
            if not ready:
                continue
            chunk = os.read(self._fd, n - len(buf))
            if not chunk:
                raise SidecarError("sidecar closed the connection")
            buf.extend(chunk)
        return bytes(buf)

    def write(self, data: bytes) -> None:
        try:
            self._write(data)
        except (BrokenPipeError, ConnectionError, OSError) as exc:
            raise SidecarError(f"cannot write to sidecar: {exc}") from exc

    def close(self) -> None:
        self._close()


def _spawn(command) -> tuple[_Stream, subprocess.Popen]:
    args = shlex.split(command) if isinstance(command, str) else list(command)
    try:
        proc = subprocess.Popen(args, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0)
    except OSError as exc:
        raise SidecarError(f"cannot launch sidecar {args!r}: {exc}") from exc

    def write(data):
        proc.stdin.write(data)
        proc.stdin.flush()

    def close():
        for f in (proc.stdin, proc.stdout):
            try:
                f.close()
            except OSError:
                pass
        if proc.poll() is None:
            proc.kill()
        proc.wait()

    return _Stream(proc.stdout.fileno(), write, close), proc


def _connect(address: str, deadline: float) -> _Stream:
    host, _, port = address.rpartition(":")
    try:
        sock = socket.create_connection((host or "127.0.0.1", int(port)), timeout=deadline)
    except OSError as exc:
        raise SidecarError(f"cannot connect to sidecar at {address}: {exc}") from exc
    sock.settimeout(None)
    return _Stream(sock.fileno(), sock.sendall, sock.close)


class _Connection:
    def __init__(self, command=None, address: str | None = None, deadline: float = DEFAULT_DEADLINE):
        if (command is None) == (address is None):
            raise ValueError("give exactly one of command or address")
        self.deadline = float(deadline)
        self.proc = None
        if command is not None:
            self.stream, self.proc = _spawn(command)
        else:
            self.stream = _connect(address, self.deadline)
        try:
            magic, version, m = HANDSHAKE.unpack(self.stream.read_exact(HANDSHAKE.size, self.deadline))
        except Exception:
            self.close()
            raise
        if magic != MAGIC:
            self.close()
            raise SidecarError(f"bad handshake magic {magic!r}")
        if version != VERSION:
            self.close()
            raise SidecarError(f"unsupported sidecar protocol version {version}")
        self.m = m

    def close(self) -> None:
        self.stream.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ExternalDecoder(_Connection):
    """Decoder living in a sidecar; ``decode`` returns its raw M-vector."""

    name = "external"

    def __init__(self, command=None, address: str | None = None, deadline: float = DEFAULT_DEADLINE,
                 expected_m: int | None = None):
        super().__init__(command, address, deadline)
        if self.m == 0:
            self.close()
            raise SidecarError("sidecar is a purifier, not a decoder")
        if expected_m is not None and expected_m != self.m:
            self.close()
            raise DimensionError(f"sidecar announces M={self.m}, expected {expected_m}")

    def decode(self, img) -> np.ndarray:
        self.stream.write(encode_raw_tensor(img))
        raw = self.stream.read_exact(4 * self.m, self.deadline)
        return np.frombuffer(raw, dtype="<f4").astype(np.float64)


def external_decode(endpoint: ExternalDecoder, img) -> np.ndarray:
    return endpoint.decode(img)


class ExternalPurifier(_Connection):
    """Purifier living in a sidecar that announced ``M = 0``."""

    def __init__(self, command=None, address: str | None = None, deadline: float = DEFAULT_DEADLINE):
        super().__init__(command, address, deadline)
        if self.m != 0:
            self.close()
            raise SidecarError("sidecar is a decoder, not a purifier")

    def __call__(self, img) -> np.ndarray:
        img = as_image(img)
        self.stream.write(encode_raw_tensor(img))
        header = self.stream.read_exact(RAW_HEADER.size, self.deadline)
        h, w, c = RAW_HEADER.unpack(header)
        body = self.stream.read_exact(4 * h * w * c, self.deadline)
        out = decode_raw_tensor(header + body)
        if out.shape != img.shape:
            raise DimensionError(f"purifier returned {out.shape} for {img.shape}")
        return out

    def as_purifier(self):
        from .attacks.oracle import Purifier

        return Purifier("external", self)
