"""File formats: binary cubes, CSV matrices, 16-bit PGM abundance maps, traces.

Cube files start with five text lines::

    RHUIDRCUBE1
    n1 <rows>
    n2 <cols>
    l <bands>
    layout band-major-colpix

followed by exactly ``8 * l * n1 * n2`` bytes of little-endian float64: the
``l x n`` matrix in row-major order (band after band, pixels in column-index
order).
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .core import Dims, HSCube, as_grid, from_grid

__all__ = [
    "FormatError",
    "CUBE_MAGIC",
    "CUBE_LAYOUT",
    "read_cube",
    "write_cube",
    "read_matrix_csv",
    "write_matrix_csv",
    "export_abundance_pgm",
    "read_pgm16",
    "load_abundance_pgm",
    "TRACE_COLUMNS",
    "write_trace_csv",
    "read_trace_csv",
]

CUBE_MAGIC = "RHUIDRCUBE1"
CUBE_LAYOUT = "band-major-colpix"
MAX_CUBE_BYTES = 1 << 40
TRACE_COLUMNS = ("iter", "rel_change", "objective", "fidelity_dist", "s_l1", "stripe_mav")
PGM_MAX = 65535


class FormatError(ValueError):
    """A file does not follow its declared format."""


def write_cube(cube: HSCube, path) -> None:
    d = cube.dims
    header = f"{CUBE_MAGIC}\nn1 {d.n1}\nn2 {d.n2}\nl {d.l}\nlayout {CUBE_LAYOUT}\n"
    payload = np.ascontiguousarray(cube.data, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload)


def _header_line(fh, path, key=None):
    raw = fh.readline(256)
    if not raw.endswith(b"\n"):
        raise FormatError(f"{path}: truncated header")
    try:
        line = raw.decode("ascii").rstrip("\n")
    except UnicodeDecodeError:
        raise FormatError(f"{path}: header is not ASCII") from None
    if key is None:
        return line
    parts = line.split(" ")
    if len(parts) != 2 or parts[0] != key:
        raise FormatError(f"{path}: expected header field {key!r}, got {line!r}")
    return parts[1]


def read_cube(path) -> HSCube:
    with open(path, "rb") as fh:
        magic = _header_line(fh, path)
        if magic != CUBE_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {CUBE_MAGIC!r}")
        sizes = []
        for key in ("n1", "n2", "l"):
            val = _header_line(fh, path, key)
            if not val.isdigit() or int(val) <= 0:
                raise FormatError(f"{path}: {key} must be a positive integer, got {val!r}")
            sizes.append(int(val))
        layout = _header_line(fh, path, "layout")
        if layout != CUBE_LAYOUT:
            raise FormatError(f"{path}: unsupported layout {layout!r}")
        n1, n2, l = sizes
        expected = 8 * n1 * n2 * l
        if expected > MAX_CUBE_BYTES:
            raise FormatError(f"{path}: dimensions {n1}x{n2}x{l} overflow the size limit")
        payload = fh.read(expected + 1)
    if len(payload) != expected:
        raise FormatError(f"{path}: payload has {len(payload)} bytes, header implies {expected}"
                          if len(payload) < expected else
                          f"{path}: trailing bytes after the {expected}-byte payload")
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(l, n1 * n2)
    return HSCube(Dims(n1, n2, l), data)


def write_matrix_csv(M, path) -> None:
    """Comma-separated rows; floats use the shortest round-trip repr."""
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        for row in M:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise FormatError(f"{path}: empty matrix file")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise FormatError(f"{path}: row {i} has {len(r)} fields, expected {width}")
    try:
        return np.array([[float(v) for v in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def _write_pgm16(img: np.ndarray, path) -> None:
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{PGM_MAX}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img, dtype=">u2").tobytes())


def read_pgm16(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    pos += 1
    if tokens[0] != b"P5" or int(tokens[3]) != PGM_MAX:
        raise FormatError(f"{path}: not a 16-bit binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    return np.frombuffer(data[pos:pos + 2 * w * h], dtype=">u2").reshape(h, w).astype(np.int64)


def export_abundance_pgm(A, dims: Dims, out_dir, prefix: str = "abundance") -> list[Path]:
    """Write one 16-bit PGM per abundance row.

    Pixel value ``q = round(a * 65535 / scale)`` with ``scale = max(A)``
    (``q = 0`` everywhere when ``max(A) <= 0``); ``a ~= q * scale / 65535``.
    The scale goes to ``<prefix>_scale.txt``.
    """
    A = np.asarray(A, dtype=np.float64)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scale = float(A.max()) if A.size else 0.0
    paths = []
    for k, row in enumerate(A):
        if scale > 0:
            q = np.rint(np.clip(row, 0.0, scale) * (PGM_MAX / scale))
        else:
            q = np.zeros_like(row)
        p = out / f"{prefix}_{k:03d}.pgm"
        _write_pgm16(as_grid(q, dims).astype(np.uint16), p)
        paths.append(p)
    with open(out / f"{prefix}_scale.txt", "w") as fh:
        fh.write(f"scale={max(scale, 0.0)!r}\n")
        fh.write(f"value = pixel * scale / {PGM_MAX}\n")
    return paths


def load_abundance_pgm(out_dir, m: int, dims: Dims, prefix: str = "abundance") -> np.ndarray:
    """Invert :func:`export_abundance_pgm` up to quantization."""
    out = Path(out_dir)
    with open(out / f"{prefix}_scale.txt") as fh:
        first = fh.readline().strip()
    if not first.startswith("scale="):
        raise FormatError(f"{out}: malformed scale sidecar")
    scale = float(first[len("scale="):])
    rows = [from_grid(read_pgm16(out / f"{prefix}_{k:03d}.pgm"), dims) for k in range(m)]
    return np.vstack(rows) * (scale / PGM_MAX)


def write_trace_csv(records: Iterable[Mapping], path, params: Mapping | None = None) -> None:
    """Trace table with ``# key=value`` lines echoing the run parameters."""
    with open(path, "w", newline="") as fh:
        for k, v in (params or {}).items():
            fh.write(f"# {k}={float(v)!r}\n" if isinstance(v, float) else f"# {k}={v}\n")
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for rec in records:
            fh.write(",".join(repr(float(rec[c])) if c != "iter" else str(int(rec[c]))
                              for c in TRACE_COLUMNS) + "\n")


def read_trace_csv(path) -> tuple[dict, dict[str, np.ndarray]]:
    params, rows, header = {}, [], None
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# "):
                k, _, v = line[2:].partition("=")
                params[k] = v
            elif header is None:
                header = line.split(",")
            elif line:
                rows.append([float(x) for x in line.split(",")])
    if header is None or tuple(header) != TRACE_COLUMNS:
        raise FormatError(f"{path}: unexpected trace header {header}")
    arr = np.array(rows).reshape(-1, len(TRACE_COLUMNS))
    return params, {c: arr[:, i] for i, c in enumerate(TRACE_COLUMNS)}
