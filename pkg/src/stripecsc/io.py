"""File formats: binary PGM, the sparse-code container, ``key = value`` configs and CSV tables.

Code container layout (all little-endian)::

    magic  b"SCSC"            4 bytes
    H, W, n, m                4 x uint32
    coefficients              H * W * m float64, needle-major (code[r, c, :] contiguous)
"""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .exceptions import FormatError

CODE_MAGIC = b"SCSC"
_CODE_HEADER = struct.Struct("<4s4I")

HISTOGRAM_HEADER = ("atom_index", "count")
MAP_HEADER = ("row", "col", "value")
METRICS_HEADER = ("iter", "objective", "primal_residual", "dual_residual")


# -- PGM ------------------------------------------------------------------------------

def _pgm_tokens(data, count, pos):
    """Read ``count`` whitespace-separated header tokens starting at byte ``pos``.

    Returns ``(tokens, payload offset)`` with absolute byte offsets.
    """
    tokens = []
    size = len(data)
    while len(tokens) < count:
        while pos < size and data[pos:pos + 1].isspace():
            pos += 1
        if pos < size and data[pos:pos + 1] == b"#":
            while pos < size and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= size:
            raise FormatError("truncated PGM header", offset=pos)
        start = pos
        while pos < size and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append((data[start:pos], start))
    # exactly one whitespace byte separates the header from the raster
    if pos >= size or not data[pos:pos + 1].isspace():
        raise FormatError("missing whitespace after PGM header", offset=pos)
    return tokens, pos + 1


def read_image(path):
    """Read a binary PGM (P5, 8-bit) as a float array with values in ``[0, 255]``."""
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise FormatError(f"not a binary PGM (magic {data[:2]!r}, expected b'P5')", offset=0)
    tokens, start = _pgm_tokens(data, 3, 2)
    values = []
    for tok, pos in tokens:
        if not tok.isdigit():
            raise FormatError(f"invalid PGM header field {tok!r}", offset=pos)
        values.append(int(tok))
    width, height, maxval = values
    if width < 1 or height < 1:
        raise FormatError("PGM dimensions must be positive", offset=tokens[0][1])
    if not 1 <= maxval <= 255:
        raise FormatError(f"unsupported PGM maxval {maxval} (8-bit only)", offset=tokens[2][1])
    need = width * height
    raster = data[start:start + need]
    if len(raster) < need:
        raise FormatError(f"truncated PGM raster: {len(raster)} of {need} bytes",
                          offset=start + len(raster))
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width).astype(float)
    if maxval != 255:
        pixels = pixels * (255.0 / maxval)
    return pixels


def to_uint8(X):
    """Clamp to ``[0, 255]`` and round half to even."""
    return np.rint(np.clip(np.asarray(X, dtype=float), 0.0, 255.0)).astype(np.uint8)


def write_image(X, path):
    pixels = to_uint8(X)
    if pixels.ndim != 2:
        raise ValueError("expected a 2-D image")
    height, width = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


# -- sparse codes ----------------------------------------------------------------------

def write_code(code, n, path):
    code = np.asarray(code, dtype="<f8")
    if code.ndim != 3:
        raise ValueError("code must have shape (H, W, m)")
    H, W, m = code.shape
    with open(path, "wb") as fh:
        fh.write(_CODE_HEADER.pack(CODE_MAGIC, H, W, n, m))
        fh.write(np.ascontiguousarray(code).tobytes())


def read_code(path):
    """Returns ``(code, n)``."""
    data = Path(path).read_bytes()
    if len(data) < _CODE_HEADER.size:
        raise FormatError("truncated code header", offset=len(data))
    magic, H, W, n, m = _CODE_HEADER.unpack_from(data)
    if magic != CODE_MAGIC:
        raise FormatError(f"bad code magic {magic!r}", offset=0)
    if min(H, W, n, m) < 1:
        raise FormatError("code dimensions must be positive", offset=4)
    need = H * W * m * 8
    payload = data[_CODE_HEADER.size:]
    if len(payload) < need:
        raise FormatError(f"truncated code payload: {len(payload)} of {need} bytes",
                          offset=_CODE_HEADER.size + len(payload))
    if len(payload) > need:
        raise FormatError("trailing bytes after code payload", offset=_CODE_HEADER.size + need)
    code = np.frombuffer(payload, dtype="<f8").reshape(H, W, m).astype(float)
    return code, n


# -- configuration ---------------------------------------------------------------------

def parse_config(text):
    """Parse ``key = value`` lines; ``#`` starts a comment. Returns an ordered dict."""
    out = {}
    offset = 0
    for line in text.splitlines(keepends=True):
        body = line.split("#", 1)[0].strip()
        if body:
            if "=" not in body:
                raise FormatError(f"expected 'key = value', got {body!r}", offset=offset)
            key, value = (part.strip() for part in body.split("=", 1))
            if not key:
                raise FormatError("empty key", offset=offset)
            out[key] = value
        offset += len(line.encode("utf-8"))
    return out


def read_config(path):
    return parse_config(Path(path).read_text(encoding="utf-8"))


# -- CSV -----------------------------------------------------------------------------------

def _fmt(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path, header, rows):
    """Comma-separated, ``\\n`` line endings, ``repr`` floats: byte-stable and locale-free.

    ``path`` may also be an open text stream.
    """
    if hasattr(path, "write"):
        _write_rows(path, header, rows)
        return
    with open(path, "w", newline="", encoding="ascii") as fh:
        _write_rows(fh, header, rows)


def _write_rows(fh, header, rows):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])


def write_histogram_csv(path, counts):
    write_csv(path, HISTOGRAM_HEADER, ((j, int(c)) for j, c in enumerate(counts)))


def write_map_csv(path, values):
    values = np.asarray(values, dtype=float)
    write_csv(path, MAP_HEADER, ((r, c, values[r, c])
                                 for r in range(values.shape[0]) for c in range(values.shape[1])))


def write_metrics_csv(path, records):
    write_csv(path, METRICS_HEADER, ((int(r.iter), r.objective, r.primal_residual, r.dual_residual)
                                     for r in records))


def read_csv(path):
    """Header and rows as strings (for checking emitted files)."""
    with open(path, newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
