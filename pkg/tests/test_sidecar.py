import shlex
import socket
import subprocess
import sys
import time

import numpy as np
import pytest

from zbwm.attacks.oracle import default_purifier
from zbwm.errors import DimensionError, SidecarError, SidecarTimeout
from zbwm.sidecar import ExternalDecoder, ExternalPurifier, external_decode
from zbwm.zerobit import SurrogateDecoder

SERVER = f"{shlex.quote(sys.executable)} -m zbwm.sidecar_server"


def test_echo_vector(rng):
    with ExternalDecoder(command=f"{SERVER} echo --m 8 --value 0.5", deadline=20) as dec:
        assert dec.m == 8
        out = external_decode(dec, rng.random((4, 4, 3)))
        np.testing.assert_array_equal(out, np.full(8, 0.5))
        # the connection serves many requests
        np.testing.assert_array_equal(dec.decode(rng.random((2, 3, 1))), np.full(8, 0.5))


def test_surrogate_sidecar_bit_identical(rng):
    local = SurrogateDecoder(seed=4, m=16, shape=(64, 64, 3))
    x = rng.random((64, 64, 3))
    # the wire carries float32 pixels and float32 outputs
    expected = local.decode(x.astype(np.float32).astype(np.float64)).astype(np.float32)
    with ExternalDecoder(command=f"{SERVER} surrogate --m 16 --seed 4 --size 64", deadline=30) as dec:
        np.testing.assert_array_equal(dec.decode(x), expected.astype(np.float64))


def test_expected_m_mismatch():
    with pytest.raises(DimensionError):
        ExternalDecoder(command=f"{SERVER} echo --m 8", expected_m=16, deadline=20)


def test_mute_sidecar_times_out(rng):
    with ExternalDecoder(command=f"{SERVER} mute --m 8", deadline=20) as dec:
        dec.deadline = 0.5
        t = time.monotonic()
        with pytest.raises(SidecarTimeout):
            dec.decode(rng.random((4, 4, 3)))
        assert time.monotonic() - t < 5


def test_bad_magic():
    cmd = [sys.executable, "-c",
           "import sys,time; sys.stdout.buffer.write(b'XXXX\\x01\\x00\\x08\\x00'); sys.stdout.flush(); time.sleep(5)"]
    with pytest.raises(SidecarError, match="magic"):
        ExternalDecoder(command=cmd, deadline=20)


def test_dead_sidecar():
    with pytest.raises(SidecarError):
        ExternalDecoder(command=[sys.executable, "-c", "pass"], deadline=20)
    with pytest.raises(SidecarError):
        ExternalDecoder(command=["/nonexistent/zbwm-sidecar"])
    with pytest.raises(ValueError):
        ExternalDecoder()


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_tcp_transport(rng):
    port = _free_port()
    proc = subprocess.Popen(shlex.split(f"{SERVER} echo --m 4 --value -2 --port {port}"))
    try:
        end = time.monotonic() + 20
        while True:
            try:
                dec = ExternalDecoder(address=f"127.0.0.1:{port}", deadline=10)
                break
            except SidecarError:
                if time.monotonic() > end:
                    raise
                time.sleep(0.1)
        with dec:
            np.testing.assert_array_equal(dec.decode(rng.random((3, 3, 3))), np.full(4, -2.0))
    finally:
        proc.kill()
        proc.wait()


def test_purifier_sidecar(rng):
    img = rng.random((16, 16, 3))
    with ExternalPurifier(command=f"{SERVER} purifier", deadline=30) as pur:
        out = pur(img)
        ref = default_purifier()(img.astype(np.float32).astype(np.float64))
        np.testing.assert_allclose(out, ref, atol=1e-6)
        assert pur.as_purifier().label == "external"
    with pytest.raises(SidecarError):
        ExternalDecoder(command=f"{SERVER} purifier", deadline=30)
    with pytest.raises(SidecarError):
        ExternalPurifier(command=f"{SERVER} echo --m 4", deadline=30)
