"""STL reading/writing and connected-component splitting.

Coordinates are stored as float64 but always hold float32-representable
values, because both STL encodings are read through float32.  That keeps
``parse_stl(write_stl(m, fmt)) == m`` exact for either encoding.
"""
from __future__ import annotations

import logging
import re
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _cc
from scipy.spatial import cKDTree

from .errors import EmptyMesh, InvalidMesh, STLSyntaxError, TruncatedFile, UnrecognizedFormat

log = logging.getLogger(__name__)

BINARY = "binary-stl"
ASCII = "ascii-stl"
FORMATS = (BINARY, ASCII)

_HEADER = 80
_RECORD = np.dtype([("normal", "<f4", (3,)), ("v", "<f4", (3, 3)), ("attr", "<u2")])
assert _RECORD.itemsize == 50


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (M, 3) int64
    source_format: str = BINARY
    dropped_degenerate: int = field(default=0, compare=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise InvalidMesh("non-finite vertex coordinate")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise InvalidMesh("triangle index out of range")
        if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
            raise InvalidMesh("triangle with repeated vertex index")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def corners(self) -> np.ndarray:
        """Triangle corner coordinates, shape (M, 3, 3)."""
        return self.vertices[self.triangles]

    def areas(self) -> np.ndarray:
        c = self.corners()
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    def transformed(self, matrix=None, offset=None) -> "TriangleMesh":
        """Apply ``x -> x @ matrix.T + offset`` to every vertex."""
        v = self.vertices
        if matrix is not None:
            v = v @ np.asarray(matrix, dtype=np.float64).T
        if offset is not None:
            v = v + np.asarray(offset, dtype=np.float64)
        return TriangleMesh(v, self.triangles, self.source_format)

    def __eq__(self, other):
        if not isinstance(other, TriangleMesh):
            return NotImplemented
        return (
            self.vertices.shape == other.vertices.shape
            and self.triangles.shape == other.triangles.shape
            and np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
        )

    __hash__ = None


@dataclass(frozen=True)
class MeshComponent:
    mesh: TriangleMesh
    component_index: int
    triangle_indices: np.ndarray = field(repr=False, compare=False)


def from_triangle_soup(corners, source_format=BINARY) -> TriangleMesh:
    """Build a cleaned mesh from (M, 3, 3) corner coordinates.

    Vertices are merged by exact equality, in first-occurrence order.
    Triangles with coincident corners are dropped.
    """
    corners = np.asarray(corners, dtype=np.float64).reshape(-1, 3, 3)
    if not np.all(np.isfinite(corners)):
        raise InvalidMesh("non-finite vertex coordinate")
    flat = corners.reshape(-1, 3)
    _, first, inverse = np.unique(flat, axis=0, return_index=True, return_inverse=True)
    tri = inverse.reshape(-1, 3)
    keep = (tri[:, 0] != tri[:, 1]) & (tri[:, 1] != tri[:, 2]) & (tri[:, 0] != tri[:, 2])
    dropped = int(len(tri) - keep.sum())
    if dropped:
        log.warning("dropped %d degenerate triangle(s)", dropped)
    tri = tri[keep]
    if len(tri) == 0:
        raise EmptyMesh("mesh has no triangles after cleaning")
    verts, tri = _compact(flat[first], tri)
    return TriangleMesh(verts, tri, source_format, dropped)


def _compact(vertices, triangles):
    """Keep referenced vertices only, renumbered by first use."""
    stream = triangles.ravel()
    _, first = np.unique(stream, return_index=True)
    used = stream[np.sort(first)]
    remap = np.full(len(vertices), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return vertices[used], remap[triangles]


# ---------------------------------------------------------------------------
# format detection and parsing


def _binary_length_ok(data: bytes) -> bool:
    if len(data) < _HEADER + 4:
        return False
    (n,) = struct.unpack_from("<I", data, _HEADER)
    return len(data) == _HEADER + 4 + 50 * n


def _looks_ascii(data: bytes) -> bool:
    return data.lstrip()[:5] == b"solid"


def detect_format(data: bytes) -> str:
    if not data:
        raise UnrecognizedFormat("empty input")
    if _looks_ascii(data):
        try:
            _parse_ascii(data)
        except (STLSyntaxError, EmptyMesh, InvalidMesh):
            pass
        else:
            return ASCII
    if _binary_length_ok(data):
        return BINARY
    raise UnrecognizedFormat("neither a valid ASCII STL nor a consistent binary STL")


def parse_stl(data: bytes) -> TriangleMesh:
    if not data:
        raise UnrecognizedFormat("empty input")
    if _looks_ascii(data):
        try:
            return from_triangle_soup(_parse_ascii(data), ASCII)
        except (STLSyntaxError, InvalidMesh):
            # an adversarial binary header may start with "solid"
            if not _binary_length_ok(data):
                raise
    return from_triangle_soup(_parse_binary(data), BINARY)


def read_stl(path) -> TriangleMesh:
    with open(path, "rb") as f:
        return parse_stl(f.read())


def _parse_binary(data: bytes) -> np.ndarray:
    if len(data) < _HEADER + 4:
        raise TruncatedFile(f"binary STL needs at least 84 bytes, got {len(data)}", len(data))
    (n,) = struct.unpack_from("<I", data, _HEADER)
    expected = _HEADER + 4 + 50 * n
    if len(data) < expected:
        k = (len(data) - _HEADER - 4) // 50
        raise TruncatedFile(
            f"binary STL declares {n} triangles ({expected} bytes) but ends at byte "
            f"{len(data)}, inside triangle {k}", len(data))
    if len(data) > expected:
        raise TruncatedFile(
            f"binary STL declares {n} triangles ({expected} bytes) but has {len(data)} bytes",
            expected)
    if n == 0:
        raise EmptyMesh("binary STL declares zero triangles")
    rec = np.frombuffer(data, dtype=_RECORD, count=n, offset=_HEADER + 4)
    corners = rec["v"].astype(np.float64)
    bad = ~np.isfinite(corners).all(axis=(1, 2))
    if bad.any():
        raise InvalidMesh(f"non-finite coordinate in facet {int(np.argmax(bad))}")
    return corners


_FLOAT = re.compile(rb"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def _floats(tokens, lineno, what):
    if len(tokens) != 3 or not all(_FLOAT.match(t) for t in tokens):
        raise STLSyntaxError(f"expected three numbers after {what!r}", lineno)
    return [float(t) for t in tokens]


def _parse_ascii(data: bytes) -> np.ndarray:
    lines = [(i + 1, ln.split()) for i, ln in enumerate(data.splitlines())]
    lines = [(i, t) for i, t in lines if t]
    pos = 0

    def expect(*words):
        nonlocal pos
        if pos >= len(lines):
            raise STLSyntaxError(f"unexpected end of file, expected {' '.join(words)!r}",
                                 lines[-1][0] if lines else 1)
        lineno, toks = lines[pos]
        if [t.lower() for t in toks[: len(words)]] != [w.encode() for w in words]:
            raise STLSyntaxError(f"expected {' '.join(words)!r}", lineno)
        pos += 1
        return lineno, toks[len(words):]

    corners = []
    nsolids = 0
    while pos < len(lines):
        expect("solid")
        nsolids += 1
        while True:
            if pos >= len(lines):
                raise STLSyntaxError("missing 'endsolid'", lines[-1][0])
            lineno, toks = lines[pos]
            head = toks[0].lower()
            if head == b"endsolid":
                pos += 1
                break
            if head != b"facet":
                raise STLSyntaxError("expected 'facet' or 'endsolid'", lineno)
            lineno, rest = expect("facet", "normal")
            _floats(rest, lineno, "facet normal")
            expect("outer", "loop")
            tri = []
            for _ in range(3):
                lineno, rest = expect("vertex")
                tri.append(_floats(rest, lineno, "vertex"))
            lineno, rest = expect("endloop")
            if rest:
                raise STLSyntaxError("trailing tokens after 'endloop'", lineno)
            lineno, rest = expect("endfacet")
            if rest:
                raise STLSyntaxError("trailing tokens after 'endfacet'", lineno)
            corners.append(tri)
    if nsolids == 0:
        raise STLSyntaxError("missing 'solid'", 1)
    arr = np.array(corners, dtype=np.float64).reshape(-1, 3, 3)
    with np.errstate(over="ignore"):
        arr32 = arr.astype(np.float32).astype(np.float64)
    if not np.all(np.isfinite(arr32)):
        raise InvalidMesh("coordinate not representable as a finite float32")
    return arr32


# ---------------------------------------------------------------------------
# writing


def _normals(corners):
    n = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    length = np.linalg.norm(n, axis=1, keepdims=True)
    return np.divide(n, length, out=np.zeros_like(n), where=length > 0)


def write_stl(mesh: TriangleMesh, format: str = BINARY, name: str = "remixscape") -> bytes:
    if mesh.n_triangles == 0:
        raise EmptyMesh("refusing to write a mesh without triangles")
    corners = mesh.corners()
    normals = _normals(corners)
    if format == BINARY:
        rec = np.zeros(len(corners), dtype=_RECORD)
        rec["normal"] = normals
        rec["v"] = corners
        header = name.encode()[:_HEADER].ljust(_HEADER, b" ")
        # never start a binary header with "solid"
        if header.lstrip().startswith(b"solid"):
            header = b"#" + header[:-1]
        return header + struct.pack("<I", len(corners)) + rec.tobytes()
    if format == ASCII:
        out = [f"solid {name}"]
        for nrm, tri in zip(normals, corners):
            out.append("  facet normal {} {} {}".format(*map(repr, nrm.tolist())))
            out.append("    outer loop")
            for v in tri.tolist():
                out.append("      vertex {} {} {}".format(*map(repr, v)))
            out.append("    endloop")
            out.append("  endfacet")
        out.append(f"endsolid {name}\n")
        return "\n".join(out).encode("ascii")
    raise ValueError(f"unknown STL format {format!r}")


# ---------------------------------------------------------------------------
# components


def weld_labels(vertices: np.ndarray, tolerance: float) -> np.ndarray:
    """Label vertices so that any two within ``tolerance`` share a label.

    Merging is transitive.  With tolerance 0 only exactly equal points merge.
    """
    n = len(vertices)
    if tolerance > 0:
        pairs = cKDTree(vertices).query_pairs(tolerance, output_type="ndarray")
    else:
        _, inv = np.unique(vertices, axis=0, return_inverse=True)
        return inv.ravel()
    if len(pairs) == 0:
        return np.arange(n)
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    return _cc(g, directed=False)[1]


def connected_components(mesh: TriangleMesh, weld_tolerance: float = 0.0) -> list[MeshComponent]:
    if weld_tolerance < 0:
        raise ValueError("weld_tolerance must be >= 0")
    labels = weld_labels(mesh.vertices, weld_tolerance)
    nlab = int(labels.max()) + 1
    t = labels[mesh.triangles]
    rows = np.concatenate([t[:, 0], t[:, 1]])
    cols = np.concatenate([t[:, 1], t[:, 2]])
    g = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(nlab, nlab))
    _, vcomp = _cc(g, directed=False)
    tcomp = vcomp[t[:, 0]]

    groups = {}
    for idx, c in enumerate(tcomp.tolist()):
        groups.setdefault(c, []).append(idx)
    ordered = sorted(groups.values(), key=lambda ix: (-len(ix), ix[0]))

    out = []
    for k, ix in enumerate(ordered):
        ix = np.asarray(ix, dtype=np.int64)
        verts, tris = _compact(mesh.vertices, mesh.triangles[ix])
        out.append(MeshComponent(TriangleMesh(verts, tris, mesh.source_format), k, ix))
    return out
