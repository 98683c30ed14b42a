import numpy as np
import pytest

from voxcorr import Volume3D, write_keypoints, write_raw_volume
from voxcorr.diffusion import binomial_smooth
from voxcorr.volume import KeypointSet


def smooth_blob_volume(seed, dims=(24, 24, 24), passes=4, spacing=(1.0, 1.0, 1.0)):
    """Smooth random field: rich content everywhere, no symmetry."""
    rng = np.random.default_rng(seed)
    nx, ny, nz = dims
    data = rng.random((nz, ny, nx), dtype=np.float32)
    return Volume3D(binomial_smooth(data, passes), spacing=spacing)


def translate_volume(vol, shift_xyz):
    """B(x) = A(x - shift), sampled with edge clamp (integer shifts are exact
    in the interior)."""
    from voxcorr.volume import trilinear_values

    nx, ny, nz = vol.dims
    zc, yc, xc = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    coords = np.stack(
        [
            xc.ravel() - shift_xyz[0],
            yc.ravel() - shift_xyz[1],
            zc.ravel() - shift_xyz[2],
        ],
        axis=1,
    ).astype(np.float64)
    data = trilinear_values(vol.data, coords).reshape(nz, ny, nx).astype(np.float32)
    return Volume3D(data, vol.spacing, vol.origin)


def interior_grid_points(dims, margin, n_max=None):
    nx, ny, nz = dims
    pts = [
        (float(x), float(y), float(z))
        for z in range(margin, nz - margin)
        for y in range(margin, ny - margin)
        for x in range(margin, nx - margin)
    ]
    if n_max is not None and len(pts) > n_max:
        step = max(1, len(pts) // n_max)
        pts = pts[::step][:n_max]
    return np.asarray(pts, dtype=np.float64)


@pytest.fixture
def pair_files(tmp_path):
    """A translated volume pair on disk with paired keypoint files."""
    shift = (3, 0, 0)
    vol_a = smooth_blob_volume(1234, dims=(20, 18, 16))
    vol_b = translate_volume(vol_a, shift)
    write_raw_volume(vol_a, tmp_path / "a.raw", tmp_path / "a.txt")
    write_raw_volume(vol_b, tmp_path / "b.raw", tmp_path / "b.txt")
    queries = interior_grid_points(vol_a.dims, margin=6, n_max=12)
    gt = queries + np.asarray(shift, dtype=np.float64)
    write_keypoints(KeypointSet(queries, "A"), tmp_path / "queries.csv")
    write_keypoints(KeypointSet(gt, "B"), tmp_path / "gt.csv")
    return {
        "dir": tmp_path,
        "vol_a": tmp_path / "a.raw",
        "sidecar_a": tmp_path / "a.txt",
        "vol_b": tmp_path / "b.raw",
        "sidecar_b": tmp_path / "b.txt",
        "queries": tmp_path / "queries.csv",
        "gt": tmp_path / "gt.csv",
        "shift": shift,
        "n_queries": queries.shape[0],
    }
