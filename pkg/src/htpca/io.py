"""Readers and writers for matrices, images, lookup tables and manifests.

Formats
-------
matrix CSV
    rows are dimensions, columns are samples; no header; 17 significant
    digits so values round-trip.
matrix binary
    8-byte magic ``HTPCAMAT``, then ``d`` and ``n`` as little-endian uint64,
    then ``d*n`` little-endian float64 values in row-major order.
PGM
    binary ``P5`` with 8-bit samples.  Pixels map linearly to ``[0, 1]`` on
    read; on write values are clipped to ``[0, 1]`` and rounded.
"""

from dataclasses import asdict, is_dataclass
import datetime as _dt
import os
from pathlib import Path
import struct

import numpy as np

from .errors import ParseError

MAGIC = b"HTPCAMAT"
_HEADER = struct.Struct("<8sQQ")


def _fmt(v):
    return repr(float(v))


def write_matrix_csv(path, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    with open(path, "w", newline="\n") as fh:
        for row in x:
            fh.write(",".join(_fmt(v) for v in row))
            fh.write("\n")


def read_matrix_csv(path):
    rows = []
    offset = 0
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.decode("ascii", errors="replace").strip()
            if text and not text.startswith("#"):
                try:
                    vals = [float(tok) for tok in text.split(",")]
                except ValueError as exc:
                    raise ParseError(f"{path}: {exc}", line=lineno, offset=offset) from None
                if not all(np.isfinite(vals)):
                    raise ParseError(f"{path}: non-finite value", line=lineno, offset=offset)
                if rows and len(vals) != len(rows[0]):
                    raise ParseError(f"{path}: expected {len(rows[0])} columns, got {len(vals)}",
                                     line=lineno, offset=offset)
                rows.append(vals)
            offset += len(raw)
    if not rows:
        raise ParseError(f"{path}: no data")
    return np.array(rows, dtype=float)


def write_matrix_binary(path, x):
    x = np.atleast_2d(np.asarray(x, dtype="<f8"))
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, x.shape[0], x.shape[1]))
        fh.write(np.ascontiguousarray(x).tobytes())


def read_matrix_binary(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ParseError(f"{path}: truncated header", offset=len(data))
    magic, d, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}", offset=0)
    expected = _HEADER.size + 8 * d * n
    if len(data) != expected:
        raise ParseError(f"{path}: expected {expected} bytes for a {d}x{n} matrix, found {len(data)}",
                         offset=min(len(data), expected))
    x = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(d, n).astype(float)
    bad = np.flatnonzero(~np.isfinite(x.ravel()))
    if bad.size:
        raise ParseError(f"{path}: non-finite value", offset=_HEADER.size + 8 * int(bad[0]))
    return x


def read_matrix(path):
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    return read_matrix_binary(path) if head == MAGIC else read_matrix_csv(path)


def write_matrix(path, x):
    if str(path).endswith(".bin"):
        write_matrix_binary(path, x)
    else:
        write_matrix_csv(path, x)


def write_vector_csv(path, v):
    write_matrix_csv(path, np.asarray(v, dtype=float).reshape(-1, 1))


# ---------------------------------------------------------------------------
# PGM


def _pgm_tokens(data, count):
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError("truncated PGM header", offset=pos)
        tokens.append((data[start:pos], start))
    return tokens, pos + 1


def read_pgm(path):
    """Return ``(pixels in [0, 1] as h x w array, maxval)``."""
    data = Path(path).read_bytes()
    tokens, body = _pgm_tokens(data, 4)
    if tokens[0][0] != b"P5":
        raise ParseError(f"{path}: not a binary PGM (P5)", offset=0)
    try:
        width, height, maxval = (int(t) for t, _ in tokens[1:])
    except ValueError:
        raise ParseError(f"{path}: malformed PGM header", offset=tokens[1][1]) from None
    if not (0 < maxval < 256):
        raise ParseError(f"{path}: only 8-bit PGM is supported (maxval {maxval})", offset=tokens[3][1])
    if len(data) - body < width * height:
        raise ParseError(f"{path}: expected {width * height} pixel bytes", offset=len(data))
    px = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=body).reshape(height, width)
    return px.astype(float) / maxval, maxval


def write_pgm(path, img):
    img = np.asarray(img, dtype=float)
    px = np.rint(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(px.tobytes())


# ---------------------------------------------------------------------------
# lookup tables, log-moments, PCA bundles


def write_lut(path, lut):
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# log-correlation table order={lut.order} step={_fmt(lut.step)}\n")
        fh.write("rho,ell\n")
        for r, e in zip(lut.rho_grid, lut.ell_values):
            fh.write(f"{_fmt(r)},{_fmt(e)}\n")


def read_lut(path):
    from .logcorr import LogLut

    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ParseError(f"{path}: missing table header", line=1)
    meta = dict(tok.split("=", 1) for tok in lines[0][1:].split() if "=" in tok)
    try:
        order, step = int(meta["order"]), float(meta["step"])
    except (KeyError, ValueError):
        raise ParseError(f"{path}: header must carry order= and step=", line=1) from None
    if len(lines) < 2 or lines[1].strip() != "rho,ell":
        raise ParseError(f"{path}: expected 'rho,ell' column header", line=2)
    vals = []
    for lineno, line in enumerate(lines[2:], start=3):
        try:
            vals.append([float(t) for t in line.split(",")])
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}", line=lineno) from None
    arr = np.array(vals)
    return LogLut(arr[:, 0], arr[:, 1], step, order)


_LM_FIELDS = ("e_log_a", "e_log_a_sq", "se_log_a", "se_log_a_sq", "e_log_abs_g")


def write_log_moments(path, lm):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(_LM_FIELDS) + "\n")
        fh.write(",".join(_fmt(getattr(lm, f)) for f in _LM_FIELDS) + "\n")


def read_log_moments(path):
    from .logcorr import SubordinatorLogMoments

    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if len(lines) != 2 or tuple(lines[0].split(",")) != _LM_FIELDS:
        raise ParseError(f"{path}: expected header {','.join(_LM_FIELDS)} and one data row", line=1)
    try:
        vals = [float(t) for t in lines[1].split(",")]
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}", line=2) from None
    return SubordinatorLogMoments(**dict(zip(_LM_FIELDS, vals)))


def write_pca_model(directory, model):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(d / "components.csv", model.components)
    write_vector_csv(d / "eigenvalues.csv", model.eigenvalues)
    write_vector_csv(d / "location.csv", model.location)


def read_pca_model(directory):
    from .pca import PcaModel

    d = Path(directory)
    return PcaModel(
        read_matrix_csv(d / "components.csv"),
        read_matrix_csv(d / "eigenvalues.csv").ravel(),
        read_matrix_csv(d / "location.csv").ravel(),
    )


def write_rows_csv(path, header, rows):
    """Delimited table; floats are written with full precision."""
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row))
            fh.write("\n")


def write_manifest(directory, config, seed, elapsed, extra=None):
    from . import __version__

    lines = [
        f"library_version: {__version__}",
        f"seed: {seed}",
        f"wall_clock_seconds: {elapsed:.3f}",
        f"written_at: {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}",
    ]
    cfg = asdict(config) if is_dataclass(config) else dict(config)
    for key in sorted(cfg):
        lines.append(f"config.{key}: {cfg[key]}")
    for key, val in (extra or {}).items():
        lines.append(f"{key}: {val}")
    path = os.path.join(directory, "manifest.txt")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
