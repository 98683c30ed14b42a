"""3D scalar volumes with physical geometry and trilinear sampling.

Conventions used throughout the engine:

* A volume of dims ``(nx, ny, nz)`` is stored as a float32 array of shape
  ``(nz, ny, nx)`` indexed ``data[z, y, x]``, so ``data.ravel()`` enumerates
  voxels x-fastest (the on-disk raster order, and the order that defines
  linear voxel indices for tie-breaking).
* Coordinates are ``(x, y, z)`` triples in continuous voxel units of the
  grid they live in.
* Resizing between grids maps output index ``i`` to input coordinate
  ``(i + 0.5) * n_in / n_out - 0.5`` (half-pixel centers), clamped to
  ``[0, n_in - 1]``. Every module shares this one convention.
* Interpolation weights and reductions accumulate in float64; stored data
  stays float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Triple = tuple[float, float, float]
Dims = tuple[int, int, int]


@dataclass(frozen=True, eq=False)
class Volume3D:
    """Dense scalar voxel grid with axis-aligned physical geometry."""

    data: np.ndarray
    spacing: Triple = (1.0, 1.0, 1.0)
    origin: Triple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"volume data must be a non-empty 3-D grid, got shape {data.shape}")
        object.__setattr__(self, "data", data)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(spacing) != 3 or any(s <= 0 or not np.isfinite(s) for s in spacing):
            raise ValueError(f"spacing must be three positive reals, got {self.spacing!r}")
        if len(origin) != 3 or any(not np.isfinite(o) for o in origin):
            raise ValueError(f"origin must be three finite reals, got {self.origin!r}")
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def dims(self) -> Dims:
        """(nx, ny, nz) voxel counts."""
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)


@dataclass(frozen=True, eq=False)
class KeypointSet:
    """Continuous voxel coordinates living in one image's grid."""

    points: np.ndarray  # (N, 3) float64, columns x, y, z
    frame: str = "A"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"keypoints must be an (N, 3) array, got shape {pts.shape}")
        if pts.size and not np.isfinite(pts).all():
            raise ValueError("keypoint coordinates must be finite")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


def map_half_pixel(idx, n_out: int, n_in: int) -> np.ndarray:
    """Map output grid indices to input coordinates along one axis."""
    idx = np.asarray(idx, dtype=np.float64)
    coords = (idx + 0.5) * (n_in / n_out) - 0.5
    return np.clip(coords, 0.0, n_in - 1)


def trilinear_values(arr: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Trilinearly interpolate ``arr`` at continuous (x, y, z) coordinates.

    ``arr`` has shape ``(nz, ny, nx)`` or ``(C, nz, ny, nx)``; ``coords`` is
    ``(N, 3)``. Coordinates are clamped to the grid. Returns float64 of shape
    ``(N,)`` or ``(C, N)``. At integer coordinates the stored value is
    returned exactly.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ValueError(f"coords must be (N, 3), got shape {coords.shape}")
    if coords.size and not np.isfinite(coords).all():
        raise ValueError("sample coordinates must be finite (no NaN/inf)")
    nz, ny, nx = arr.shape[-3:]

    x = np.clip(coords[:, 0], 0.0, nx - 1)
    y = np.clip(coords[:, 1], 0.0, ny - 1)
    z = np.clip(coords[:, 2], 0.0, nz - 1)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    z0 = np.floor(z).astype(np.intp)
    x1 = np.minimum(x0 + 1, nx - 1)
    y1 = np.minimum(y0 + 1, ny - 1)
    z1 = np.minimum(z0 + 1, nz - 1)
    fx = x - x0
    fy = y - y0
    fz = z - z0

    out = np.zeros(arr.shape[:-3] + (coords.shape[0],), dtype=np.float64)
    for iz, wz in ((z0, 1.0 - fz), (z1, fz)):
        for iy, wy in ((y0, 1.0 - fy), (y1, fy)):
            for ix, wx in ((x0, 1.0 - fx), (x1, fx)):
                out += (wz * wy * wx) * arr[..., iz, iy, ix]
    return out


def sample_trilinear(vol: Volume3D, coord) -> float:
    """Interpolate one value; coordinates outside the grid clamp to it."""
    coord = np.asarray(coord, dtype=np.float64).reshape(1, 3)
    return float(trilinear_values(vol.data, coord)[0])


def normalize_intensity(vol: Volume3D) -> Volume3D:
    """Rescale values to [0, 1]; a constant volume maps to all zeros."""
    lo = float(vol.data.min())
    hi = float(vol.data.max())
    if hi == lo:
        out = np.zeros_like(vol.data)
    else:
        out = ((vol.data.astype(np.float64) - lo) / (hi - lo)).astype(np.float32)
    return Volume3D(out, vol.spacing, vol.origin)


def resample_trilinear(vol: Volume3D, new_dims: Dims) -> Volume3D:
    """Resample onto a new grid with half-pixel-center coordinate mapping.

    Spacing rescales so the physical extent (dims * spacing) is preserved;
    the origin shifts so grid edges stay fixed in world space.
    """
    new_dims = tuple(int(n) for n in new_dims)
    if len(new_dims) != 3 or any(n < 1 for n in new_dims):
        raise ValueError(f"target dims must be three positive counts, got {new_dims!r}")
    nx, ny, nz = vol.dims
    mx, my, mz = new_dims
    if (mx, my, mz) == (nx, ny, nz):
        return Volume3D(vol.data.copy(), vol.spacing, vol.origin)

    xs = map_half_pixel(np.arange(mx), mx, nx)
    ys = map_half_pixel(np.arange(my), my, ny)
    zs = map_half_pixel(np.arange(mz), mz, nz)

    out = np.empty((mz, my, mx), dtype=np.float32)
    # Slab over z to bound the coordinate-grid working set.
    slab = max(1, (1 << 21) // max(1, mx * my))
    for z_start in range(0, mz, slab):
        z_stop = min(mz, z_start + slab)
        zc, yc, xc = np.meshgrid(zs[z_start:z_stop], ys, xs, indexing="ij")
        coords = np.stack([xc.ravel(), yc.ravel(), zc.ravel()], axis=1)
        vals = trilinear_values(vol.data, coords)
        out[z_start:z_stop] = vals.reshape(z_stop - z_start, my, mx).astype(np.float32)

    new_spacing = tuple(s * n / m for s, n, m in zip(vol.spacing, (nx, ny, nz), (mx, my, mz)))
    new_origin = tuple(
        o + 0.5 * (ns - s) for o, s, ns in zip(vol.origin, vol.spacing, new_spacing)
    )
    return Volume3D(out, new_spacing, new_origin)


def voxel_to_world(p, vol: Volume3D) -> Triple:
    """Axis-aligned voxel-to-millimeter transform: origin + p * spacing."""
    p = np.asarray(p, dtype=np.float64)
    world = np.asarray(vol.origin, dtype=np.float64) + p * np.asarray(vol.spacing, dtype=np.float64)
    return (float(world[0]), float(world[1]), float(world[2]))
