"""Synthetic meshes and corpora for tests, benchmarks and demos."""
from __future__ import annotations

import json
import os
from datetime import datetime, timedelta, timezone

import numpy as np
from scipy.spatial.transform import Rotation

from .mesh_io import TriangleMesh, from_triangle_soup, write_stl


def _mesh(vertices, triangles) -> TriangleMesh:
    # round through float32 so meshes survive STL round trips unchanged
    v = np.asarray(vertices, dtype=np.float32).astype(np.float64)
    return from_triangle_soup(v[np.asarray(triangles)])


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriangleMesh:
    t = (1 + 5 ** 0.5) / 2
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
             (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
             (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return _mesh(np.array(verts) * radius, faces)


def box(size=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    sx, sy, sz = (np.asarray(size, dtype=float) / 2)
    v = np.array([[x, y, z] for x in (-sx, sx) for y in (-sy, sy) for z in (-sz, sz)])
    v += np.asarray(center, dtype=float)
    faces = [(0, 1, 3), (0, 3, 2), (4, 6, 7), (4, 7, 5), (0, 4, 5), (0, 5, 1),
             (2, 3, 7), (2, 7, 6), (0, 2, 6), (0, 6, 4), (1, 5, 7), (1, 7, 3)]
    return _mesh(v, faces)


def cylinder(radius=1.0, height=2.0, segments=48) -> TriangleMesh:
    a = 2 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(a), radius * np.sin(a)], axis=1)
    bottom = np.column_stack([ring, np.full(segments, -height / 2)])
    top = np.column_stack([ring, np.full(segments, height / 2)])
    v = np.vstack([bottom, top, [[0, 0, -height / 2], [0, 0, height / 2]]])
    cb, ct = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [(i, j, segments + j), (i, segments + j, segments + i),
                  (cb, j, i), (ct, segments + i, segments + j)]
    return _mesh(v, faces)


def torus(major=1.0, minor=0.35, segments=48, rings=24) -> TriangleMesh:
    u = 2 * np.pi * np.arange(segments) / segments
    w = 2 * np.pi * np.arange(rings) / rings
    uu, ww = np.meshgrid(u, w, indexing="ij")
    v = np.stack([(major + minor * np.cos(ww)) * np.cos(uu),
                  (major + minor * np.cos(ww)) * np.sin(uu),
                  minor * np.sin(ww)], axis=-1).reshape(-1, 3)
    faces = []
    for i in range(segments):
        for j in range(rings):
            a = i * rings + j
            b = ((i + 1) % segments) * rings + j
            c = ((i + 1) % segments) * rings + (j + 1) % rings
            d = i * rings + (j + 1) % rings
            faces += [(a, b, c), (a, c, d)]
    return _mesh(v, faces)


def union(*meshes: TriangleMesh) -> TriangleMesh:
    """Concatenate meshes into one multi-component mesh."""
    return from_triangle_soup(np.concatenate([m.corners() for m in meshes]))


def moved(mesh: TriangleMesh, rotation=None, scale=1.0, offset=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Rotate, scale, then translate; result rounded to float32 like an STL."""
    m = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
    return _mesh(mesh.corners().reshape(-1, 3) @ (scale * m).T + np.asarray(offset),
                 np.arange(3 * mesh.n_triangles).reshape(-1, 3))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    return Rotation.random(random_state=rng).as_matrix()


def axis_rotations() -> list[np.ndarray]:
    """The 23 non-identity rotations of the cube."""
    mats = []
    for perm in ([0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]):
        for signs in np.ndindex(2, 2, 2):
            m = np.zeros((3, 3))
            for r, (c, s) in enumerate(zip(perm, signs)):
                m[r, c] = -1.0 if s else 1.0
            if np.linalg.det(m) > 0 and not np.allclose(m, np.eye(3)):
                mats.append(m)
    return mats


def benchmark_shapes() -> dict[str, TriangleMesh]:
    return {
        "sphere": icosphere(3),
        "cube": box((2, 2, 2)),
        "cylinder": cylinder(1.0, 2.5),
        "torus": torus(),
        "two_component": union(icosphere(2, 0.8), box((1, 1, 1), center=(2.2, 0.3, -0.4))),
    }


# ---------------------------------------------------------------------------
# corpora

_BASES = ("sphere", "cube", "cylinder", "torus")


def _base(kind: str, rng) -> TriangleMesh:
    if kind == "sphere":
        return icosphere(2, rng.uniform(5, 20))
    if kind == "cube":
        return box(rng.uniform(5, 30, size=3))
    if kind == "cylinder":
        return cylinder(rng.uniform(3, 10), rng.uniform(5, 40), segments=24)
    return torus(rng.uniform(8, 15), rng.uniform(2, 5), segments=24, rings=12)


def synthetic_corpus(directory, n: int = 20, seed: int = 0, remix_rate: float = 0.6,
                     duplicate_every: int = 0, start=datetime(2012, 1, 1, tzinfo=timezone.utc)):
    """Write ``n`` STL files plus ``manifest.jsonl`` into ``directory``.

    Designs arrive one hour apart.  A remix picks one or two earlier designs
    as parents and perturbs or combines their geometry.  With
    ``duplicate_every = k`` every k-th design re-uploads an earlier file
    byte-for-byte.  Returns the manifest path.
    """
    rng = np.random.default_rng(seed)
    os.makedirs(directory, exist_ok=True)
    meshes, rows = [], []
    for i in range(n):
        did = f"d{i:03d}"
        parents = []
        if duplicate_every and i and i % duplicate_every == 0:
            src = int(rng.integers(i))
            mesh = meshes[src]
            parents = [rows[src]["id"]]
        elif i >= 2 and rng.random() < remix_rate:
            k = 1 if rng.random() < 0.7 else 2
            picks = sorted(rng.choice(i, size=k, replace=False).tolist())
            parents = [rows[p]["id"] for p in picks]
            parts = [moved(meshes[p], random_rotation(rng), rng.uniform(0.8, 1.25),
                           rng.uniform(-5, 5, size=3) + 40 * j)
                     for j, p in enumerate(picks)]
            if rng.random() < 0.3:
                extra = _base(_BASES[int(rng.integers(4))], rng)
                parts.append(moved(extra, offset=rng.uniform(-30, 30, size=3)))
            mesh = union(*parts)
        else:
            mesh = _base(_BASES[int(rng.integers(4))], rng)
        meshes.append(mesh)
        fname = f"{did}.stl"
        fmt = "ascii-stl" if i % 5 == 4 else "binary-stl"
        with open(os.path.join(directory, fname), "wb") as f:
            f.write(write_stl(mesh, fmt, name=did))
        popularity = int(rng.negative_binomial(1, 0.05 if parents else 0.08))
        rows.append({
            "id": did,
            "file": fname,
            "timestamp": (start + timedelta(hours=i)).strftime("%Y-%m-%dT%H:%M:%SZ"),
            "parents": parents,
            "popularity": popularity,
        })
    path = os.path.join(directory, "manifest.jsonl")
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")
    return path
