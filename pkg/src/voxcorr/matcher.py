"""Correspondence search: per-query argmax of cosine similarity over a volume.

Candidates are the integer voxels of the target grid (optionally restricted
to an axis-aligned box around each query). Candidate descriptors come from
the lazy sampler in blocks sized to a working-set budget; scores accumulate
in float64 and per-block winners merge with (score, linear-index) ordering,
so results are identical for any block size or thread count. Ties break to
the smallest linear index in x-fastest raster order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .descriptor import NORM_EPS, DescriptorSampler
from .errors import EmptyRegionError
from .volume import KeypointSet, Volume3D

DEFAULT_MEM_BUDGET = 64 << 20  # bytes of candidate working set per block


@dataclass(frozen=True)
class SearchRegion:
    """Axis-aligned candidate box in the target grid, clipped to its bounds."""

    center: tuple[int, int, int]
    half_widths: tuple[int, int, int]

    def __post_init__(self):
        if any(h < 0 for h in self.half_widths):
            raise ValueError(f"half widths must be >= 0, got {self.half_widths}")

    def clip(self, dims) -> tuple[tuple[int, int, int], tuple[int, int, int]]:
        """Inclusive (lo, hi) corners; raises EmptyRegionError if nothing survives."""
        lo = tuple(max(0, c - h) for c, h in zip(self.center, self.half_widths))
        hi = tuple(min(n - 1, c + h) for c, h, n in zip(self.center, self.half_widths, dims))
        if any(a > b for a, b in zip(lo, hi)):
            raise EmptyRegionError(
                f"box around {self.center} with half widths {self.half_widths}"
                f" clips to empty on grid {tuple(dims)}"
            )
        return lo, hi


@dataclass(frozen=True)
class MatchResult:
    query: tuple[float, float, float]
    match: tuple[int, int, int]
    score: float
    searched_candidates: int


@dataclass(frozen=True)
class MatchError:
    """Per-query failure record (e.g. the search box clipped to empty)."""

    query: tuple[float, float, float]
    reason: str


def cosine_similarity(a, b) -> float:
    """a.b / (|a||b|) with float64 accumulation; zero if either norm < 1e-12."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"descriptor lengths differ: {a.shape[0]} vs {b.shape[0]}")
    na = float(np.sqrt(np.dot(a, a)))
    nb = float(np.sqrt(np.dot(b, b)))
    if na < NORM_EPS or nb < NORM_EPS:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def _check_compatible(ds_a: DescriptorSampler, ds_b: DescriptorSampler):
    if ds_a.descriptor_length != ds_b.descriptor_length:
        raise ValueError(
            "descriptor lengths differ between sides:"
            f" {ds_a.descriptor_length} vs {ds_b.descriptor_length}"
            " (select the same levels on both)"
        )


def _query_matrix(ds_a: DescriptorSampler, queries: KeypointSet):
    q = ds_a.sample(queries.points).astype(np.float64)
    qnorm = np.sqrt(np.einsum("ij,ij->i", q, q))
    return q, qnorm


def _score_block(cand: np.ndarray, q: np.ndarray, qnorm: np.ndarray) -> np.ndarray:
    """Cosine scores of (n, C) float32 candidates against (Nq, C) queries.

    One matrix-vector product per query: a candidate/query score is then the
    same float64 reduction no matter how queries or candidates are batched,
    which keeps boxed and global searches bitwise consistent.
    """
    c = cand.astype(np.float64)
    cnorm = np.sqrt(np.einsum("ij,ij->i", c, c))
    ok = cnorm >= NORM_EPS
    out = np.zeros((c.shape[0], q.shape[0]))
    for j in range(q.shape[0]):
        if qnorm[j] < NORM_EPS:
            continue
        np.divide(c @ q[j], cnorm * qnorm[j], out=out[:, j], where=ok)
    return out


def _block_length(n_channels: int, n_queries: int, mem_budget_bytes: int) -> int:
    # float32 descriptors + float64 copy + one float64 score row per query
    per_candidate = n_channels * 12 + max(1, n_queries) * 8
    return max(256, int(mem_budget_bytes) // per_candidate)


def _linear_to_coords(idx: np.ndarray, dims) -> np.ndarray:
    nx, ny, _ = dims
    x = idx % nx
    rest = idx // nx
    y = rest % ny
    z = rest // ny
    return np.stack([x, y, z], axis=1).astype(np.float64)


def _run_blocks(tasks, threads: int):
    """Evaluate block tasks, possibly in parallel, preserving list order."""
    if threads <= 1 or len(tasks) <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(t) for t in tasks]
        return [f.result() for f in futures]


def _reduce_best(block_results):
    """Merge (global_indices, scores) block winners; earlier index wins ties."""
    best_idx = None
    best_score = None
    for idx, score in block_results:
        if best_idx is None:
            best_idx = idx.copy()
            best_score = score.copy()
            continue
        better = score > best_score
        best_idx[better] = idx[better]
        best_score[better] = score[better]
    return best_idx, best_score


def match_global(
    ds_a: DescriptorSampler,
    ds_b: DescriptorSampler,
    queries: KeypointSet,
    *,
    threads: int = 1,
    mem_budget_bytes: int = DEFAULT_MEM_BUDGET,
) -> list[MatchResult]:
    """Exhaustive search over every integer voxel of the target grid."""
    _check_compatible(ds_a, ds_b)
    if len(queries) == 0:
        return []
    q, qnorm = _query_matrix(ds_a, queries)
    dims = ds_b.target_dims
    total = dims[0] * dims[1] * dims[2]
    block_len = _block_length(ds_b.descriptor_length, len(queries), mem_budget_bytes)

    def make_task(start, stop):
        def task():
            idx = np.arange(start, stop, dtype=np.int64)
            cand = ds_b.sample(_linear_to_coords(idx, dims))
            scores = _score_block(cand, q, qnorm)  # (n, Nq)
            local = np.argmax(scores, axis=0)  # first max: smallest index
            return idx[local], scores[local, np.arange(len(queries))]

        return task

    tasks = [make_task(s, min(total, s + block_len)) for s in range(0, total, block_len)]
    best_idx, best_score = _reduce_best(_run_blocks(tasks, threads))

    coords = _linear_to_coords(best_idx, dims).astype(np.int64)
    return [
        MatchResult(
            query=tuple(float(v) for v in queries.points[i]),
            match=(int(coords[i, 0]), int(coords[i, 1]), int(coords[i, 2])),
            score=float(best_score[i]),
            searched_candidates=total,
        )
        for i in range(len(queries))
    ]


def _box_candidate_indices(point, half_widths, dims) -> np.ndarray:
    """Ascending linear indices of the box around round(point), clipped."""
    center = tuple(int(np.floor(p + 0.5)) for p in point)
    region = SearchRegion(center=center, half_widths=tuple(half_widths))
    lo, hi = region.clip(dims)
    nx, ny, _ = dims
    xs = np.arange(lo[0], hi[0] + 1, dtype=np.int64)
    ys = np.arange(lo[1], hi[1] + 1, dtype=np.int64)
    zs = np.arange(lo[2], hi[2] + 1, dtype=np.int64)
    zc, yc, xc = np.meshgrid(zs, ys, xs, indexing="ij")
    return (xc + nx * (yc + ny * zc)).ravel()


def match_boxed(
    ds_a: DescriptorSampler,
    ds_b: DescriptorSampler,
    queries: KeypointSet,
    box_half_widths,
    *,
    threads: int = 1,
    mem_budget_bytes: int = DEFAULT_MEM_BUDGET,
) -> list[MatchResult | MatchError]:
    """Search restricted to round(p) +- half_widths per query.

    A query whose box clips to empty yields a MatchError record in its slot
    rather than aborting the batch.
    """
    _check_compatible(ds_a, ds_b)
    if len(queries) == 0:
        return []
    half_widths = tuple(int(h) for h in box_half_widths)
    if len(half_widths) != 3 or any(h < 0 for h in half_widths):
        raise ValueError(f"box half widths must be three values >= 0, got {box_half_widths!r}")
    q, qnorm = _query_matrix(ds_a, queries)
    dims = ds_b.target_dims
    block_len = _block_length(ds_b.descriptor_length, 1, mem_budget_bytes)

    def make_task(i):
        def task():
            try:
                idx = _box_candidate_indices(queries.points[i], half_widths, dims)
            except EmptyRegionError as exc:
                return MatchError(
                    query=tuple(float(v) for v in queries.points[i]), reason=str(exc)
                )
            qi = q[i : i + 1]
            qni = qnorm[i : i + 1]
            parts = []
            for s in range(0, idx.size, block_len):
                sub = idx[s : s + block_len]
                cand = ds_b.sample(_linear_to_coords(sub, dims))
                scores = _score_block(cand, qi, qni)[:, 0]
                j = int(np.argmax(scores))
                parts.append((sub[j : j + 1], scores[j : j + 1]))
            best_idx, best_score = _reduce_best(parts)
            coords = _linear_to_coords(best_idx, dims).astype(np.int64)[0]
            return MatchResult(
                query=tuple(float(v) for v in queries.points[i]),
                match=(int(coords[0]), int(coords[1]), int(coords[2])),
                score=float(best_score[0]),
                searched_candidates=int(idx.size),
            )

        return task

    return _run_blocks([make_task(i) for i in range(len(queries))], threads)


def similarity_map(
    ds_a: DescriptorSampler,
    p,
    ds_b: DescriptorSampler,
    *,
    spacing=(1.0, 1.0, 1.0),
    origin=(0.0, 0.0, 0.0),
    mem_budget_bytes: int = DEFAULT_MEM_BUDGET,
) -> Volume3D:
    """Cosine similarity of descriptor_A(p) against every voxel of B's grid."""
    _check_compatible(ds_a, ds_b)
    q = ds_a.sample_one(p).astype(np.float64).reshape(1, -1)
    qnorm = np.sqrt(np.einsum("ij,ij->i", q, q))
    dims = ds_b.target_dims
    nx, ny, nz = dims
    total = nx * ny * nz
    block_len = _block_length(ds_b.descriptor_length, 1, mem_budget_bytes)
    flat = np.empty(total, dtype=np.float32)
    for s in range(0, total, block_len):
        idx = np.arange(s, min(total, s + block_len), dtype=np.int64)
        cand = ds_b.sample(_linear_to_coords(idx, dims))
        flat[s : s + idx.size] = _score_block(cand, q, qnorm)[:, 0].astype(np.float32)
    return Volume3D(flat.reshape(nz, ny, nx), spacing, origin)
