"""Binary grid snapshots (``PVIGRID1``) and CSV series.

Layout, all little-endian::

    8 bytes   magic "PVIGRID1"
    u32       version
    u32       d (spatial dimension)
    u32       number of unknowns
    u32[k]    dims of one unknown (k = d + 1: time, x1, tangential...)
    f64[k]    spacings (dt, dx1, dx_tan...)
    f64       eps
    f64[...]  payload, row-major over (unknown, *dims)
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .errors import ParseError

MAGIC = b"PVIGRID1"
VERSION = 1


def write_snapshot(path, data, spacings, eps: float, d: int) -> None:
    data = np.ascontiguousarray(np.asarray(data, dtype="<f8"))
    dims = data.shape[1:]
    if len(dims) != d + 1 or len(spacings) != d + 1:
        raise ValueError("snapshot needs d + 1 dims and spacings")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<III", VERSION, d, data.shape[0]))
    buf.write(struct.pack(f"<{len(dims)}I", *dims))
    buf.write(struct.pack(f"<{len(dims)}d", *[float(s) for s in spacings]))
    buf.write(struct.pack("<d", float(eps)))
    buf.write(data.tobytes(order="C"))
    Path(path).write_bytes(buf.getvalue())


def read_snapshot(path):
    """Return ``(data, spacings, eps, d)``."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ParseError("not a PVIGRID1 file")
    version, d, nunk = struct.unpack_from("<III", raw, 8)
    if version != VERSION:
        raise ParseError(f"unsupported snapshot version {version}")
    off = 20
    k = d + 1
    dims = struct.unpack_from(f"<{k}I", raw, off)
    off += 4 * k
    spacings = struct.unpack_from(f"<{k}d", raw, off)
    off += 8 * k
    (eps,) = struct.unpack_from("<d", raw, off)
    off += 8
    count = nunk * int(np.prod(dims))
    data = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape((nunk,) + dims)
    return data.copy(), tuple(spacings), eps, d


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(path, columns: dict) -> None:
    """Write equal-length columns with a header row and 17 significant digits."""
    names = list(columns)
    arrays = [np.asarray(columns[n], float).ravel() for n in names]
    n = {len(a) for a in arrays}
    if len(n) > 1:
        raise ValueError("CSV columns must share a length")
    lines = [",".join(names)]
    for row in zip(*arrays):
        lines.append(",".join(format_float(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> dict:
    text = Path(path).read_text().strip().splitlines()
    names = text[0].split(",")
    rows = np.array([[float(x) for x in line.split(",")] for line in text[1:]])
    rows = rows.reshape(-1, len(names))
    return {n: rows[:, k] for k, n in enumerate(names)}
