"""Rotation-invariant spherical-harmonic shape descriptors.

Pipeline: surface-rasterize a mesh into an N^3 occupancy grid, normalize
for translation and scale, restrict the grid to R concentric spheres, and
keep the per-degree energy of each spherical function.  Per-degree energy
is unchanged by rotations (and reflections), which makes the R x L energy
matrix a rotation-invariant fingerprint.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from .errors import BandwidthExceeded, DegenerateGeometry
from .mesh_io import TriangleMesh, connected_components

log = logging.getLogger(__name__)

JOINT = "joint"
MATCHED = "component-matched"
MODES = (JOINT, MATCHED)

# bump when voxelization/normalization rules change; part of params_hash
NORMALIZATION_RULES = "surface-centroid/mean-dist-N4/gauss-distance-1/clip-N2"
CLIP_WARN = 0.05


@dataclass(frozen=True)
class DescriptorConfig:
    resolution: int = 64
    radii: int = 32
    bands: int = 16
    bandwidth: int = 16
    mode: str = JOINT
    weld_tolerance: float = 0.0
    smoothing: float = 2.5

    def __post_init__(self):
        n = self.resolution
        if n < 16 or n % 2:
            raise ValueError(f"resolution must be even and >= 16, got {n}")
        if not 1 <= self.radii <= n // 2:
            raise ValueError(f"radii must be in [1, {n // 2}], got {self.radii}")
        if self.bands < 1:
            raise ValueError("bands must be >= 1")
        if self.bands > self.bandwidth:
            raise BandwidthExceeded(f"bands={self.bands} exceeds bandwidth={self.bandwidth}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.weld_tolerance < 0:
            raise ValueError("weld_tolerance must be >= 0")
        if self.smoothing < 0:
            raise ValueError("smoothing must be >= 0")

    @property
    def params_hash(self) -> str:
        key = dict(asdict(self), rules=NORMALIZATION_RULES)
        key["weld_tolerance"] = float(key["weld_tolerance"])
        key["smoothing"] = float(key["smoothing"])
        return hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()


@dataclass(frozen=True)
class Normalization:
    centroid_offset: np.ndarray  # mesh-space point mapped to the grid center
    scale_factor: float  # grid units per mesh unit
    clipped_fraction: float


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Occupancy grid; voxel (i, j, k) is centered at (i, j, k) + 0.5 - N/2."""

    occupancy: np.ndarray
    normalization: Normalization | None = None
    surface: np.ndarray | None = None  # unblurred exp(-d^2/2) surface weight per voxel

    @property
    def resolution(self) -> int:
        return self.occupancy.shape[0]

    def surface_stats(self) -> tuple[np.ndarray, float]:
        """Surface-weighted voxel centroid and mean distance from the grid center."""
        w = self.surface if self.surface is not None else self.occupancy
        idx = np.argwhere(w > 0)
        wt = w[w > 0]
        pts = idx + 0.5 - self.resolution / 2
        centroid = (pts * wt[:, None]).sum(axis=0) / wt.sum()
        return centroid, float((np.linalg.norm(pts, axis=1) * wt).sum() / wt.sum())


@dataclass(frozen=True, eq=False)
class ShapeDescriptor:
    energies: np.ndarray  # (R, L)
    params_hash: str

    @property
    def radii_count(self) -> int:
        return self.energies.shape[0]

    @property
    def bands_count(self) -> int:
        return self.energies.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ShapeDescriptor):
            return NotImplemented
        return self.params_hash == other.params_hash and np.array_equal(self.energies, other.energies)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class DesignDescriptor:
    joint: ShapeDescriptor
    per_component: tuple[ShapeDescriptor, ...]
    mode: str = JOINT
    clipped_fraction: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if not self.per_component:
            raise ValueError("per_component must be non-empty")
        object.__setattr__(self, "per_component", tuple(self.per_component))

    @property
    def params_hash(self) -> str:
        return self.joint.params_hash

    def all(self) -> list[ShapeDescriptor]:
        return [self.joint, *self.per_component]

    def __eq__(self, other):
        if not isinstance(other, DesignDescriptor):
            return NotImplemented
        return (self.mode == other.mode and self.joint == other.joint
                and self.per_component == other.per_component)

    __hash__ = None


# ---------------------------------------------------------------------------
# voxelization

FALLOFF = 1.0  # width (voxels) of the Gaussian of surface distance
CUTOFF = 3.0 * FALLOFF
_CHUNK = 400_000


def surface_samples(corners: np.ndarray, spacing: float | None = None):
    """Area-weighted points covering the surface.

    Each triangle is split into k^2 congruent sub-triangles, represented by
    their centroids, with k chosen so sub-triangle edges are <= ``spacing``
    (k = 1 when ``spacing`` is None).  Samples depend only on the triangles,
    so they move rigidly with the mesh.
    """
    if spacing is None:
        ks = np.ones(len(corners), dtype=np.int64)
    else:
        longest = np.linalg.norm(corners - np.roll(corners, 1, axis=1), axis=2).max(axis=1)
        ks = np.maximum(1, np.ceil(longest / spacing)).astype(np.int64)
    pts, wts = [], []
    for k in np.unique(ks):
        tri = corners[ks == k]
        a, b = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
        up = (a + b) < k
        dn = (a + b) < k - 1
        bary = np.concatenate([np.stack([a[up] + 1 / 3, b[up] + 1 / 3], 1),
                               np.stack([a[dn] + 2 / 3, b[dn] + 2 / 3], 1)]) / k
        e1 = tri[:, 1] - tri[:, 0]
        e2 = tri[:, 2] - tri[:, 0]
        p = tri[:, None, 0] + bary[None, :, :1] * e1[:, None] + bary[None, :, 1:] * e2[:, None]
        area = 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)
        pts.append(p.reshape(-1, 3))
        wts.append(np.repeat(area / (k * k), len(bary)))
    return np.concatenate(pts), np.concatenate(wts)


def _surface_distance2(corners: np.ndarray, n: int, cutoff: float) -> np.ndarray:
    """Squared distance from each voxel center to the surface, inf beyond ``cutoff``.

    ``corners`` are in centered grid coordinates; the result has shape
    (n, n, n) with voxel i centered at i + 0.5 - n/2.
    """
    half = n // 2
    a = corners[:, 0]
    ab = corners[:, 1] - a
    ac = corners[:, 2] - a
    normal = np.cross(ab, ac)
    area2 = np.linalg.norm(normal, axis=1)
    keep = area2 > 0
    a, ab, ac, normal, area2 = a[keep], ab[keep], ac[keep], normal[keep], area2[keep]
    corners = corners[keep]
    # local frame: u along ab, w = normal, v = w x u; triangle is (0,0), (bx,0), (cx,cy)
    bx = np.linalg.norm(ab, axis=1)
    u = ab / bx[:, None]
    w = normal / area2[:, None]
    v = np.cross(w, u)
    cx = np.einsum("md,md->m", ac, u)
    cy = np.einsum("md,md->m", ac, v)

    lo = np.clip(np.ceil(corners.min(axis=1) - cutoff - 0.5).astype(np.int64) + half, 0, n)
    hi = np.clip(np.floor(corners.max(axis=1) + cutoff - 0.5).astype(np.int64) + half + 1, 0, n)
    dims = np.maximum(hi - lo, 0)
    counts = dims.prod(axis=1)

    best = np.full(n ** 3, np.inf)
    order = np.flatnonzero(counts)
    start = 0
    while start < len(order):
        csum = np.cumsum(counts[order[start:]])
        stop = start + max(1, int(np.searchsorted(csum, _CHUNK, side="right")))
        tri = order[start:stop]
        start = stop
        c = counts[tri]
        tid = np.repeat(tri, c)
        local = np.arange(c.sum()) - np.repeat(np.cumsum(c) - c, c)
        d = dims[tid]
        iz = local % d[:, 2]
        iy = (local // d[:, 2]) % d[:, 1]
        ix = local // (d[:, 2] * d[:, 1])
        idx = lo[tid] + np.stack([ix, iy, iz], axis=1)
        rel = idx + (0.5 - half) - a[tid]
        z = np.einsum("kd,kd->k", rel, w[tid])
        # voxels farther than the cutoff from the plane can never qualify
        near = np.abs(z) <= cutoff
        tid, idx, rel, z = tid[near], idx[near], rel[near], z[near]
        x = np.einsum("kd,kd->k", rel, u[tid])
        y = np.einsum("kd,kd->k", rel, v[tid])
        tb, tcx, tcy = bx[tid], cx[tid], cy[tid]
        # edge ab on the x axis
        t = np.clip(x / tb, 0, 1)
        d2 = (x - t * tb) ** 2 + y * y
        # edge bc
        ex, ey = tcx - tb, tcy
        t = np.clip(((x - tb) * ex + y * ey) / (ex * ex + ey * ey), 0, 1)
        d2 = np.minimum(d2, (x - tb - t * ex) ** 2 + (y - t * ey) ** 2)
        side_bc = ex * y - ey * (x - tb)
        # edge ca
        t = np.clip((x * tcx + y * tcy) / (tcx * tcx + tcy * tcy), 0, 1)
        d2 = np.minimum(d2, (x - t * tcx) ** 2 + (y - t * tcy) ** 2)
        side_ca = x * tcy - y * tcx
        inside = (y >= 0) & (side_bc >= 0) & (side_ca >= 0)
        d2 = np.where(inside, 0.0, d2) + z * z
        np.minimum.at(best, np.ravel_multi_index(idx.T, (n, n, n)), d2)
    best[best > cutoff * cutoff] = np.inf
    return best.reshape(n, n, n)


def normalize_surface(mesh: TriangleMesh, resolution: int):
    """Surface centroid and grid-units-per-mesh-unit scale.

    The scale maps the area-weighted mean distance from the centroid to
    resolution / 4.  Samples are refined until sub-triangles are at most
    one voxel wide after scaling.
    """
    corners = mesh.corners()
    extent = np.ptp(corners.reshape(-1, 3), axis=0).max() if len(corners) else 0.0
    if not extent > 0:
        raise DegenerateGeometry("all triangles collapse to a point")
    scale = None
    for spacing in (None, 1.0):
        pts, w = surface_samples(corners, None if spacing is None else spacing / scale)
        total = w.sum()
        if not total > 0:
            raise DegenerateGeometry("mesh has no surface area")
        center = (pts * w[:, None]).sum(axis=0) / total
        dist = np.linalg.norm(pts - center, axis=1)
        scale = (resolution / 4) / ((dist * w).sum() / total)
    clipped = float(w[dist * scale > resolution / 2].sum() / total)
    return center, float(scale), clipped


def voxelize(mesh: TriangleMesh, resolution: int = 64, smoothing: float = 2.5) -> VoxelGrid:
    """Rasterize the surface of ``mesh`` into a normalized occupancy grid.

    The mesh is translated so its area-weighted surface centroid is at the
    grid center and scaled so the mean surface distance from it is
    resolution / 4.  Each voxel then holds exp(-d^2 / 2) of the distance d
    (in voxels) from its center to the surface, truncated at 3 voxels and
    blurred by an isotropic Gaussian of ``smoothing`` voxels.  Both steps
    keep the field nearly independent of how the surface sits relative to
    the voxel lattice, which is what makes the downstream energies
    rotation invariant.  Everything beyond radius resolution / 2 is
    cleared; the clipped share of surface area is reported.
    """
    n = resolution
    if n < 16 or n % 2:
        raise ValueError(f"resolution must be even and >= 16, got {n}")
    if mesh.n_triangles == 0:
        raise DegenerateGeometry("mesh has no triangles")
    center, scale, clipped = normalize_surface(mesh, n)
    d2 = _surface_distance2((mesh.corners() - center) * scale, n, CUTOFF)
    c = np.arange(n) + 0.5 - n / 2
    outside = c[:, None, None] ** 2 + c[None, :, None] ** 2 + c[None, None, :] ** 2 > (n / 2) ** 2
    surface = np.exp(-d2 / (2 * FALLOFF ** 2))
    surface[outside] = 0.0
    field_ = surface
    if smoothing > 0:
        field_ = gaussian_filter(surface, smoothing, mode="constant", truncate=3.0)
        field_[outside] = 0.0
        np.clip(field_, 0.0, 1.0, out=field_)
    if clipped > CLIP_WARN:
        log.warning("%.1f%% of surface area clipped outside radius %d", 100 * clipped, n // 2)
    return VoxelGrid(field_, Normalization(center, scale, clipped), surface)


# ---------------------------------------------------------------------------
# spherical harmonics


def _legendre_table(lmax: int, x: np.ndarray) -> np.ndarray:
    """Orthonormal associated Legendre values P[l, m, :] for 0 <= m <= l < lmax.

    Normalized so that P[l, m](cos t) * exp(i m p) is an orthonormal basis
    on the unit sphere (Condon-Shortley phase omitted).
    """
    x = np.asarray(x, dtype=np.float64)
    s = np.sqrt(np.clip(1 - x * x, 0, None))
    p = np.zeros((lmax, lmax) + x.shape)
    p[0, 0] = np.sqrt(1 / (4 * np.pi))
    for m in range(1, lmax):
        p[m, m] = np.sqrt((2 * m + 1) / (2 * m)) * s * p[m - 1, m - 1]
    for m in range(lmax - 1):
        p[m + 1, m] = np.sqrt(2 * m + 3) * x * p[m, m]
    for m in range(lmax):
        for l in range(m + 2, lmax):
            a = np.sqrt((4 * l * l - 1) / (l * l - m * m))
            b = np.sqrt(((l - 1) ** 2 - m * m) / (4 * (l - 1) ** 2 - 1))
            p[l, m] = a * (x * p[l - 1, m] - b * p[l - 2, m])
    return p


def real_sph_harm(lmax: int, theta, phi) -> np.ndarray:
    """Real orthonormal spherical harmonics, shape (lmax^2, *theta.shape).

    Row l*l + l + m holds degree l, order m (sine terms for m < 0).
    """
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    p = _legendre_table(lmax, np.cos(theta))
    out = np.empty((lmax * lmax,) + theta.shape)
    root2 = np.sqrt(2.0)
    for l in range(lmax):
        out[l * l + l] = p[l, 0]
        for m in range(1, l + 1):
            out[l * l + l + m] = root2 * p[l, m] * np.cos(m * phi)
            out[l * l + l - m] = root2 * p[l, m] * np.sin(m * phi)
    return out


class SphereQuadrature:
    """Equiangular 2B x 2B sampling with Driscoll-Healy weights.

    Integrates products of functions with bandwidth B exactly, so the
    harmonic coefficients of a band-limited function are recovered to
    rounding error.
    """

    def __init__(self, bandwidth: int = 16):
        b = bandwidth
        self.bandwidth = b
        j = np.arange(2 * b)
        self.theta = np.pi * (2 * j + 1) / (4 * b)
        self.phi = 2 * np.pi * np.arange(2 * b) / (2 * b)
        k = np.arange(b)
        self.weights = (2 / b) * np.sin(self.theta) * (
            np.sin(np.outer(2 * j + 1, 2 * k + 1) * np.pi / (4 * b)) / (2 * k + 1)
        ).sum(axis=1)
        tt, pp = np.meshgrid(self.theta, self.phi, indexing="ij")
        self.directions = np.stack(
            [np.sin(tt) * np.cos(pp), np.sin(tt) * np.sin(pp), np.cos(tt)], axis=-1
        ).reshape(-1, 3)
        self._tt, self._pp = tt.ravel(), pp.ravel()
        self._w = np.repeat(self.weights, 2 * b) * (np.pi / b)

    @lru_cache(maxsize=8)
    def _projector(self, lmax: int) -> np.ndarray:
        if lmax > self.bandwidth:
            raise BandwidthExceeded(f"bands={lmax} exceeds bandwidth={self.bandwidth}")
        return (real_sph_harm(lmax, self._tt, self._pp) * self._w).T

    def coefficients(self, samples: np.ndarray, lmax: int) -> np.ndarray:
        """Real harmonic coefficients of samples on ``directions``; (..., lmax^2)."""
        return samples @ self._projector(lmax)

    def band_energies(self, samples: np.ndarray, lmax: int) -> np.ndarray:
        """sqrt of summed squared coefficients per degree; (..., lmax)."""
        c = self.coefficients(samples, lmax) ** 2
        return np.sqrt(np.stack([c[..., l * l:(l + 1) ** 2].sum(axis=-1) for l in range(lmax)], -1))


@lru_cache(maxsize=4)
def _quadrature(bandwidth: int) -> SphereQuadrature:
    return SphereQuadrature(bandwidth)


def sample_radii(resolution: int, radii_count: int) -> np.ndarray:
    return np.arange(1, radii_count + 1) * (resolution / 2) / radii_count


def spherical_decompose(grid, radii_count: int = 32, bands_count: int = 16,
                        bandwidth: int = 16, resolution: int | None = None,
                        params_hash: str = "") -> ShapeDescriptor:
    """Per-radius spherical-harmonic band energies.

    ``grid`` is a VoxelGrid (sampled trilinearly) or a callable mapping
    centered (K, 3) points to K values; a callable needs ``resolution``.
    """
    if bands_count > bandwidth:
        raise BandwidthExceeded(f"bands={bands_count} exceeds bandwidth={bandwidth}")
    if isinstance(grid, VoxelGrid):
        n = grid.resolution
        half = n / 2

        def sampler(p):
            return map_coordinates(grid.occupancy, (p + half - 0.5).T, order=1,
                                   mode="constant", cval=0.0, prefilter=False)
    else:
        if resolution is None:
            raise ValueError("resolution is required when sampling a callable")
        n, sampler = resolution, grid
    if radii_count > n // 2:
        raise ValueError(f"radii_count={radii_count} exceeds resolution/2={n // 2}")
    quad = _quadrature(bandwidth)
    radii = sample_radii(n, radii_count)
    pts = radii[:, None, None] * quad.directions[None]
    values = np.asarray(sampler(pts.reshape(-1, 3)), dtype=np.float64)
    values = values.reshape(radii_count, -1)
    energies = quad.band_energies(values, bands_count)
    # empty shells give exactly zero
    energies[~values.any(axis=1)] = 0.0
    return ShapeDescriptor(energies, params_hash)


# ---------------------------------------------------------------------------
# designs


def describe_grid(grid: VoxelGrid, config: DescriptorConfig) -> ShapeDescriptor:
    return spherical_decompose(grid, config.radii, config.bands, config.bandwidth,
                               params_hash=config.params_hash)


def describe(mesh: TriangleMesh, config: DescriptorConfig | None = None,
             mode: str | None = None) -> DesignDescriptor:
    """Joint descriptor of the whole mesh plus one per connected component."""
    config = config or DescriptorConfig()
    if mode is not None and mode != config.mode:
        config = DescriptorConfig(**dict(asdict(config), mode=mode))
    grid = voxelize(mesh, config.resolution, config.smoothing)
    joint = describe_grid(grid, config)
    comps = connected_components(mesh, config.weld_tolerance)
    per = []
    for comp in comps:
        if len(comps) == 1:
            per.append(joint)
            break
        per.append(describe_grid(voxelize(comp.mesh, config.resolution, config.smoothing), config))
    return DesignDescriptor(joint, tuple(per), config.mode, grid.normalization.clipped_fraction)


def relative_deviation(a, b) -> float:
    """L1 deviation of ``b`` from reference ``a``, relative to ``a``'s L1 mass."""
    a = a.energies if isinstance(a, ShapeDescriptor) else np.asarray(a)
    b = b.energies if isinstance(b, ShapeDescriptor) else np.asarray(b)
    return float(np.abs(a - b).sum() / np.abs(a).sum())
