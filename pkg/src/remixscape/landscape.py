"""2D design landscape: MDS of the distance matrix, popularity as elevation."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NotSymmetric, ProjectionDegenerate, UnknownDesign

CLASSICAL = "classical"
SMACOF = "classical+smacof"
Z_TRANSFORMS = {"raw": float, "log1p": math.log1p}
STRESS_FLOOR = 1e-24  # normalized stress this small is an exact embedding up to rounding


@dataclass(frozen=True, eq=False)
class Embedding2D:
    ids: tuple[str, ...]
    points: np.ndarray  # (n, 2)
    stress: float
    method: str = CLASSICAL
    eigenvalues: tuple[float, ...] = ()
    z: np.ndarray | None = None
    stress_history: tuple[float, ...] = field(default=(), repr=False)
    iterations: int = 0

    def sidecar(self) -> dict:
        return {
            "method": self.method,
            "stress": self.stress,
            "eigenvalues": list(self.eigenvalues),
            "iterations": self.iterations,
            "n": len(self.ids),
        }


def normalized_stress(d: np.ndarray, points: np.ndarray) -> float:
    """sum (dhat - d)^2 / sum d^2 over pairs i < j."""
    iu = np.triu_indices(len(d), 1)
    target = d[iu]
    diff = points[:, None, :] - points[None, :, :]
    dhat = np.sqrt((diff ** 2).sum(axis=-1))[iu]
    denom = (target ** 2).sum()
    if denom == 0:
        return 0.0
    return float(((dhat - target) ** 2).sum() / denom)


def _orient(points: np.ndarray) -> np.ndarray:
    """Center, then flip each axis so its largest-magnitude coordinate is positive."""
    points = points - points.mean(axis=0)
    for k in range(points.shape[1]):
        col = points[:, k]
        if col[np.argmax(np.abs(col))] < 0:
            points[:, k] = -col
    return points


def _check(values):
    d = np.asarray(values, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise NotSymmetric("distance matrix must be square")
    scale = max(1.0, float(np.abs(d).max(initial=0.0)))
    if np.abs(d - d.T).max(initial=0.0) > 1e-12 * scale:
        raise NotSymmetric("distance matrix is not symmetric")
    if np.any(np.diag(d) != 0):
        raise NotSymmetric("distance matrix has a non-zero diagonal")
    if np.any(d < 0):
        raise NotSymmetric("distance matrix has negative entries")
    return (d + d.T) / 2


def classical_mds(dm) -> Embedding2D:
    """Torgerson scaling onto the two leading eigenvectors."""
    d = _check(dm.values)
    n = len(d)
    if n < 3:
        raise ProjectionDegenerate(f"need at least 3 designs, got {n}")
    j = np.eye(n) - 1.0 / n
    b = -0.5 * j @ (d ** 2) @ j
    b = (b + b.T) / 2
    evals, evecs = np.linalg.eigh(b)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    top = evals[:2]
    tol = 1e-10 * max(1.0, float(np.abs(evals).max()))
    if np.any(top < -tol):
        raise ProjectionDegenerate(f"leading eigenvalues {top.tolist()} include a negative one")
    top = np.clip(top, 0.0, None)
    points = _orient(evecs[:, :2] * np.sqrt(top))
    return Embedding2D(tuple(dm.ids), points, normalized_stress(d, points), CLASSICAL,
                       tuple(float(x) for x in top))


def _guttman(d, x):
    diff = x[:, None, :] - x[None, :, :]
    dhat = np.sqrt((diff ** 2).sum(axis=-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(dhat > 0, -d / dhat, 0.0)
    np.fill_diagonal(b, 0.0)
    np.fill_diagonal(b, -b.sum(axis=1))
    return b @ x / len(d)


def smacof_refine(dm, init: Embedding2D, max_iter: int = 300, rel_tol: float = 1e-9) -> Embedding2D:
    """Stress majorization (unit weights) starting from ``init``.

    Stops when the relative stress decrease falls below ``rel_tol`` or after
    ``max_iter`` updates; returns the lowest-stress iterate.
    """
    d = _check(dm.values)
    if tuple(init.ids) != tuple(dm.ids) or init.points.shape != (len(d), 2):
        raise ValueError("init embedding does not match the distance matrix")
    x = np.array(init.points, dtype=np.float64)
    stress = normalized_stress(d, x)
    history = [stress]
    best_x, best = x, stress
    it = 0
    while it < max_iter and stress > STRESS_FLOOR:
        x = _guttman(d, x)
        it += 1
        new = normalized_stress(d, x)
        history.append(new)
        if new < best:
            best_x, best = x, new
        done = (stress - new) < rel_tol * stress
        stress = new
        if done:
            break
    points = _orient(best_x)
    return replace(init, points=points, stress=normalized_stress(d, points), method=SMACOF,
                   stress_history=tuple(history), iterations=it)


@dataclass(frozen=True)
class LandscapeRow:
    id: str
    x: float
    y: float
    z: float


def emit_landscape(embedding: Embedding2D, corpus, z_transform: str = "log1p") -> list[LandscapeRow]:
    """Attach transformed popularity to every embedded point, in manifest order."""
    if z_transform not in Z_TRANSFORMS:
        raise ValueError(f"z_transform must be one of {sorted(Z_TRANSFORMS)}")
    f = Z_TRANSFORMS[z_transform]
    pos = {i: k for k, i in enumerate(embedding.ids)}
    known = set(corpus.ids())
    missing = [i for i in embedding.ids if i not in known]
    if missing:
        raise UnknownDesign("no popularity for: " + ", ".join(missing))
    rows = []
    for i in corpus.ids():
        if i in pos:
            x, y = embedding.points[pos[i]]
            rows.append(LandscapeRow(i, float(x), float(y), f(corpus.record(i).popularity)))
    return rows


def landscape_csv(rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["id", "x", "y", "z"])
    for r in rows:
        w.writerow([r.id, repr(r.x), repr(r.y), repr(float(r.z))])
    return out.getvalue()


def sidecar_json(embedding: Embedding2D, z_transform: str) -> str:
    meta = embedding.sidecar()
    meta["z_transform"] = z_transform
    return json.dumps(meta, indent=2) + "\n"
