"""The .mvf container: matrix-valued fields and forms on grids.

Layout: the magic bytes ``MVF\\n``, a little-endian uint64 header length, a
UTF-8 JSON header, then the payload — one complex block per component, each
complex number stored as a little-endian (real, imag) float64 pair, sites in
row-major axis order.  Components are ordered lexicographically by their
axis-index tuples; the header lists them explicitly.

Header keys: ``format`` ("mvf/1"), ``kind`` (unitary | projection |
connection | form), ``axes`` ([{name, size, periodic, length}]), ``degree``
(an int for homogeneous forms, a sorted list for mixed-degree forms such as
Chern characters), ``matdim``, ``components``, and for fields ``window``
([p, q]) plus optional ``time_axis`` and free-form ``meta``.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .fields import ConnectionField, PathField, ProjectionField, UnitaryField, Window
from .grid_forms import Axis, Grid, MatrixForm

MAGIC = b"MVF\n"
FORMAT = "mvf/1"


def _grid_header(grid: Grid) -> list[dict]:
    return [{"name": a.name, "size": a.size, "periodic": a.periodic,
             "length": a.length} for a in grid.axes]


def _grid_from_header(axes: list[dict]) -> Grid:
    return Grid(tuple(Axis(a["name"], a["size"], a["periodic"], a["length"])
                      for a in axes))


def _payload(components: dict, keys: list[tuple[int, ...]]) -> bytes:
    chunks = []
    for key in keys:
        arr = np.ascontiguousarray(components[key], dtype=np.complex128)
        pairs = np.empty(arr.shape + (2,), dtype="<f8")
        pairs[..., 0] = arr.real
        pairs[..., 1] = arr.imag
        chunks.append(pairs.tobytes())
    return b"".join(chunks)


def _object_header(obj) -> tuple[dict, dict]:
    if isinstance(obj, MatrixForm):
        degs = obj.degrees
        header = {"format": FORMAT, "kind": "form",
                  "axes": _grid_header(obj.grid),
                  "degree": degs[0] if len(degs) == 1 else list(degs),
                  "matdim": obj.matdim}
        comps = obj.components
    elif isinstance(obj, (UnitaryField, ProjectionField)):
        header = {"format": FORMAT, "kind": obj.kind,
                  "axes": _grid_header(obj.grid), "degree": 0,
                  "matdim": obj.matdim,
                  "window": [obj.window.p, obj.window.q]}
        comps = {(): obj.data}
    elif isinstance(obj, ConnectionField):
        header = {"format": FORMAT, "kind": "connection",
                  "axes": _grid_header(obj.grid), "degree": 1,
                  "matdim": obj.matdim,
                  "window": [obj.window.p, obj.window.q]}
        comps = obj.alpha.components
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    return header, comps


def save(path, obj, time_axis: str | None = None, meta: dict | None = None) -> None:
    if isinstance(obj, PathField):
        return save(path, obj.field, time_axis=obj.time_axis, meta=meta)
    header, comps = _object_header(obj)
    keys = sorted(comps)
    header["components"] = [list(k) for k in keys]
    if time_axis is not None:
        header["time_axis"] = time_axis
    if meta:
        header["meta"] = meta
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(_payload(comps, keys))


def load(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: not an .mvf file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode())
        raw = fh.read()
    if header.get("format") != FORMAT:
        raise ValueError(f"{path}: unsupported format {header.get('format')!r}")
    grid = _grid_from_header(header["axes"])
    n = header["matdim"]
    site_count = int(np.prod(grid.shape)) if grid.dim else 1
    block = site_count * n * n * 16
    keys = [tuple(k) for k in header["components"]]
    if len(raw) != block * len(keys):
        raise ValueError(f"{path}: payload size mismatch")
    comps: dict[tuple[int, ...], np.ndarray] = {}
    for i, key in enumerate(keys):
        pairs = np.frombuffer(raw, dtype="<f8", count=site_count * n * n * 2,
                              offset=i * block)
        arr = (pairs[0::2] + 1j * pairs[1::2]).reshape(grid.shape + (n, n))
        comps[key] = np.ascontiguousarray(arr)
    kind = header["kind"]
    if kind == "form":
        return MatrixForm(grid, n, comps)
    window = Window(*header["window"])
    if kind == "unitary":
        obj = UnitaryField(grid, window, comps[()])
    elif kind == "projection":
        obj = ProjectionField(grid, window, comps[()])
    elif kind == "connection":
        alpha = MatrixForm(grid, n, comps)
        obj = ConnectionField(grid, window, alpha)
    else:
        raise ValueError(f"{path}: unknown kind {kind!r}")
    taxis = header.get("time_axis")
    if taxis is not None and kind in ("unitary", "projection"):
        return PathField(obj, taxis)
    return obj
