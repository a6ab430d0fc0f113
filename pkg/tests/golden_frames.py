"""Hand-assembled E2-lite frames, independent of the encoder.

Run as a script to (re)write ``testdata/frames``. The tests compare the
encoder output against both these byte strings and the stored files.
"""

from __future__ import annotations

import struct
import sys
from pathlib import Path

FRAMES_DIR = Path(__file__).resolve().parents[1] / "testdata" / "frames"


def le_f64(x: float) -> bytes:
    return struct.pack("<d", x)


def header(msg_type: int, node_id: int, ts: int, plen: int) -> bytes:
    return (b"E2LT" + bytes([1, msg_type]) + node_id.to_bytes(4, "little")
            + ts.to_bytes(8, "little") + plen.to_bytes(4, "little"))


def sub_ack() -> bytes:
    # node 7, t = 0, empty payload
    return bytes.fromhex("45324c54" "01" "02" "07000000" "0000000000000000" "00000000")


def sub_request() -> bytes:
    payload = (bytes.fromhex("64000000") + bytes.fromhex("0200")
               + bytes.fromhex("0300") + b"prb"
               + bytes.fromhex("0400") + b"sinr")
    return header(1, 3, 1_700_000_000_000, len(payload)) + payload


def kpm_indication() -> bytes:
    payload = (
        (1_700_000_000_100).to_bytes(8, "little") + (2).to_bytes(4, "little")
        + le_f64(37.5) + le_f64(2.0) + le_f64(120.0)
        + le_f64(0.25) + le_f64(0.5) + le_f64(0.25)
        + (1).to_bytes(4, "little")
        + (11).to_bytes(4, "little") + le_f64(2.5e6) + (2).to_bytes(2, "little")
        + (1).to_bytes(4, "little") + le_f64(-3.25)
        + (2).to_bytes(4, "little") + le_f64(12.0)
    )
    return header(3, 2, 1_700_000_000_100, len(payload)) + payload


def ric_control() -> bytes:
    return header(4, 1, 1_700_000_000_100, 8) + bytes.fromhex("0b000000" "05000000")


def control_ack() -> bytes:
    return header(5, 1, 1_700_000_000_130, 9) + bytes.fromhex("0b000000" "05000000" "00")


GOLDEN = {
    "subscription_ack_node7.bin": sub_ack,
    "subscription_request.bin": sub_request,
    "kpm_indication.bin": kpm_indication,
    "ric_control.bin": ric_control,
    "control_ack.bin": control_ack,
}


if __name__ == "__main__":
    FRAMES_DIR.mkdir(parents=True, exist_ok=True)
    for name, fn in GOLDEN.items():
        (FRAMES_DIR / name).write_bytes(fn())
        print(name, len(fn()), file=sys.stderr)
