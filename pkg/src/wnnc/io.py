"""Point-cloud files: whitespace XYZ and PLY (ascii, binary little/big endian).

Only the ``vertex`` element is read; its ``x y z`` and optional ``nx ny nz``
properties. Other elements are skipped.
"""
from __future__ import annotations

import os

import numpy as np

FORMATS = ("xyz", "ply-ascii", "ply-binary")
_ALIASES = {"xyz-ascii": "xyz", "ply-binary-little-endian": "ply-binary"}

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


class CloudFormatError(ValueError):
    """Malformed point-cloud file."""

    def __init__(self, path, line, message):
        loc = f"{path}:{line}" if line else str(path)
        super().__init__(f"{loc}: {message}")
        self.line = line


def infer_format(path) -> str:
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".ply":
        return "ply-binary"
    if ext in (".xyz", ".txt", ".pts", ".xyzn"):
        return "xyz"
    raise ValueError(f"cannot infer point-cloud format from {path!r}")


def read_cloud(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Return ``(positions, normals)``; ``normals`` is None when the file has none."""
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic.startswith(b"ply"):
        pos, nrm = _read_ply(path)
    else:
        pos, nrm = _read_xyz(path)
    if len(pos) == 0:
        raise CloudFormatError(path, None, "no points")
    return pos, nrm


def _read_xyz(path):
    rows = []
    width = None
    with open(path, "r") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) not in (3, 6):
                raise CloudFormatError(path, lineno, f"expected 3 or 6 values, got {len(parts)}")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise CloudFormatError(path, lineno, "inconsistent column count")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise CloudFormatError(path, lineno, "non-numeric value") from None
    if not rows:
        return np.zeros((0, 3)), None
    data = np.asarray(rows)
    return data[:, :3].copy(), (data[:, 3:6].copy() if width == 6 else None)


def _parse_header(f, path):
    if f.readline().strip() != b"ply":
        raise CloudFormatError(path, 1, "missing 'ply' magic")
    fmt = None
    elements = []  # (name, count, [(prop, dtype | ("list", count_t, item_t))])
    lineno = 1
    while True:
        raw = f.readline()
        lineno += 1
        if not raw:
            raise CloudFormatError(path, lineno, "unterminated header")
        tok = raw.decode("ascii", "replace").split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "end_header":
            break
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] not in ("ascii", "binary_little_endian", "binary_big_endian"):
                raise CloudFormatError(path, lineno, f"unsupported format {' '.join(tok[1:])!r}")
            fmt = tok[1]
        elif tok[0] == "element":
            try:
                elements.append((tok[1], int(tok[2]), []))
            except (IndexError, ValueError):
                raise CloudFormatError(path, lineno, "bad element line") from None
        elif tok[0] == "property":
            if not elements:
                raise CloudFormatError(path, lineno, "property before element")
            try:
                if tok[1] == "list":
                    prop = (tok[4], ("list", _PLY_TYPES[tok[2]], _PLY_TYPES[tok[3]]))
                else:
                    prop = (tok[2], _PLY_TYPES[tok[1]])
            except (IndexError, KeyError):
                raise CloudFormatError(path, lineno, "bad property line") from None
            elements[-1][2].append(prop)
        else:
            raise CloudFormatError(path, lineno, f"unknown header keyword {tok[0]!r}")
    if fmt is None:
        raise CloudFormatError(path, lineno, "missing format line")
    return fmt, elements, lineno


def _vertex_arrays(path, cols: dict):
    if not {"x", "y", "z"} <= cols.keys():
        raise CloudFormatError(path, None, "vertex element lacks x, y, z")
    pos = np.stack([np.asarray(cols[k], dtype=np.float64) for k in "xyz"], axis=1)
    nrm = None
    if {"nx", "ny", "nz"} <= cols.keys():
        nrm = np.stack([np.asarray(cols[k], dtype=np.float64) for k in ("nx", "ny", "nz")], axis=1)
    return pos, nrm


def _read_ply(path):
    with open(path, "rb") as f:
        fmt, elements, header_lines = _parse_header(f, path)
        if fmt == "ascii":
            return _read_ply_ascii(f, path, elements, header_lines)
        endian = "<" if fmt == "binary_little_endian" else ">"
        for name, count, props in elements:
            if any(isinstance(t, tuple) for _, t in props):
                if name == "vertex":
                    raise CloudFormatError(path, None, "list properties on vertex are not supported")
                _skip_binary_lists(f, path, count, props, endian)
                continue
            dtype = np.dtype([(p, endian + t) for p, t in props])
            buf = f.read(dtype.itemsize * count)
            if len(buf) != dtype.itemsize * count:
                raise CloudFormatError(path, None, f"truncated {name} data")
            data = np.frombuffer(buf, dtype=dtype, count=count)
            if name == "vertex":
                return _vertex_arrays(path, {n: data[n] for n in data.dtype.names})
    raise CloudFormatError(path, None, "no vertex element")


def _skip_binary_lists(f, path, count, props, endian):
    for _ in range(count):
        for _, t in props:
            if isinstance(t, tuple):
                _, count_t, item_t = t
                n_raw = f.read(np.dtype(count_t).itemsize)
                if not n_raw:
                    raise CloudFormatError(path, None, "truncated list data")
                n = int(np.frombuffer(n_raw, dtype=endian + count_t)[0])
                f.read(n * np.dtype(item_t).itemsize)
            else:
                f.read(np.dtype(t).itemsize)


def _read_ply_ascii(f, path, elements, lineno):
    for name, count, props in elements:
        rows = []
        for _ in range(count):
            raw = f.readline()
            lineno += 1
            if not raw:
                raise CloudFormatError(path, lineno, f"truncated {name} data")
            if name != "vertex":
                continue
            tok = raw.split()
            if len(tok) < len(props):
                raise CloudFormatError(path, lineno, f"expected {len(props)} values")
            try:
                rows.append([float(t) for t in tok[: len(props)]])
            except ValueError:
                raise CloudFormatError(path, lineno, "non-numeric value") from None
        if name == "vertex":
            if any(isinstance(t, tuple) for _, t in props):
                raise CloudFormatError(path, lineno, "list properties on vertex are not supported")
            data = np.asarray(rows, dtype=np.float64).reshape(count, len(props))
            cols = {p: data[:, i] for i, (p, _) in enumerate(props)}
            return _vertex_arrays(path, cols)
    raise CloudFormatError(path, None, "no vertex element")


def write_cloud(path, positions, normals=None, fmt: str | None = None) -> None:
    """Write ``positions`` (and ``normals`` as nx ny nz). Binary PLY is little-endian float64."""
    fmt = _ALIASES.get(fmt, fmt) if fmt else infer_format(path)
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; choose from {', '.join(FORMATS)}")
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    cols = [pos]
    if normals is not None:
        nrm = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
        if len(nrm) != len(pos):
            raise ValueError("normals and positions differ in length")
        cols.append(nrm)
    data = np.hstack(cols)
    if fmt == "xyz":
        np.savetxt(path, data, fmt="%.17g")
        return
    names = ["x", "y", "z"] + (["nx", "ny", "nz"] if normals is not None else [])
    header = ["ply", "format " + ("ascii" if fmt == "ply-ascii" else "binary_little_endian") + " 1.0",
              f"element vertex {len(pos)}"]
    header += [f"property double {n}" for n in names]
    header.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if fmt == "ply-ascii":
            np.savetxt(f, data, fmt="%.17g")
        else:
            f.write(data.astype("<f8").tobytes())
