"""Reference sidecar speaking the external decoder protocol.

    python -m zbwm.sidecar_server echo --m 8 --value 0.5
    python -m zbwm.sidecar_server surrogate --m 256 --seed 0 --size 1024
    python -m zbwm.sidecar_server purifier
    python -m zbwm.sidecar_server mute --m 8      # handshakes, never answers

Serves stdin/stdout by default, or one TCP client at a time with ``--port``.
"""
from __future__ import annotations

import argparse
import socket
import sys
import time

import numpy as np

from .imagecore import RAW_HEADER, decode_raw_tensor, encode_raw_tensor
from .sidecar import HANDSHAKE, MAGIC, VERSION


def _read_exact(read, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = read(n - len(buf))
        if not chunk:
            return None
        buf.extend(chunk)
    return bytes(buf)


def make_handler(args):
    if args.mode == "echo":
        vec = np.full(args.m, args.value, dtype="<f4")
        return args.m, lambda img: vec.tobytes()
    if args.mode == "surrogate":
        from .zerobit import SurrogateDecoder

        dec = SurrogateDecoder(seed=args.seed, m=args.m, shape=(args.size, args.size, 3))
        return args.m, lambda img: dec.decode(img).astype("<f4").tobytes()
    if args.mode == "purifier":
        from .attacks.oracle import default_purifier

        pur = default_purifier()
        return 0, lambda img: encode_raw_tensor(pur(img))
    if args.mode == "mute":
        return args.m, None
    raise ValueError(args.mode)


def serve(read, write, m: int, handler) -> None:
    write(HANDSHAKE.pack(MAGIC, VERSION, m))
    while True:
        header = _read_exact(read, RAW_HEADER.size)
        if header is None:
            return
        h, w, c = RAW_HEADER.unpack(header)
        body = _read_exact(read, 4 * h * w * c)
        if body is None:
            return
        if handler is None:
            time.sleep(3600)
            return
        write(handler(decode_raw_tensor(header + body)))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="zbwm-sidecar")
    ap.add_argument("mode", choices=["echo", "surrogate", "purifier", "mute"])
    ap.add_argument("--m", type=int, default=8)
    ap.add_argument("--value", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--size", type=int, default=1024)
    ap.add_argument("--port", type=int, default=None)
    args = ap.parse_args(argv)
    m, handler = make_handler(args)
    if args.port is None:
        stdin = sys.stdin.buffer
        stdout = sys.stdout.buffer

        def write(data):
            stdout.write(data)
            stdout.flush()

        serve(stdin.read, write, m, handler)
        return 0
    with socket.create_server(("127.0.0.1", args.port)) as srv:
        while True:
            conn, _ = srv.accept()
            with conn:
                serve(conn.recv, conn.sendall, m, handler)


if __name__ == "__main__":
    sys.exit(main())
