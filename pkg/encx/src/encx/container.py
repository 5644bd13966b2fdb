"""Binary vector container writer (the ``EMB1`` layout).

The format is the downstream retrieval toolkit's interchange contract:
magic ``EMB1``, little-endian u32 entry count and dimension, then per
entry a u16 token byte length, the UTF-8 token, and the float32
little-endian components. This module deliberately reimplements the
writer instead of importing the consumer package; the bytes on disk
are the only coupling between the two.
"""

import os
import struct
import tempfile

import numpy as np

MAGIC = b"EMB1"


def write_container(path: str, entries: list[tuple[str, np.ndarray]]) -> None:
    """Write (token, vector) pairs; all vectors must share one dimension."""
    if not entries:
        raise ValueError("refusing to write an empty container")
    dim = len(entries[0][1])
    payload = bytearray()
    payload += MAGIC
    payload += struct.pack("<II", len(entries), dim)
    for token, vector in entries:
        vector = np.asarray(vector, dtype=np.float32)
        if vector.shape != (dim,):
            raise ValueError(f"vector for {token!r} has shape {vector.shape}, "
                             f"expected ({dim},)")
        if not np.all(np.isfinite(vector)):
            raise ValueError(f"non-finite components in vector for {token!r}")
        raw = token.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"token too long for container: {token[:40]!r}...")
        payload += struct.pack("<H", len(raw))
        payload += raw
        payload += vector.astype("<f4", copy=False).tobytes()
    atomic_write_bytes(path, bytes(payload))


def atomic_write_bytes(path: str, data: bytes) -> None:
    # stage in the destination directory so os.replace stays atomic
    directory = os.path.dirname(os.path.abspath(path))
    fd, staging = tempfile.mkstemp(dir=directory, prefix=".encx-")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(staging, path)
    except BaseException:
        if os.path.exists(staging):
            os.unlink(staging)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
