"""Forward noising of latent tensors and a synthetic multi-scale feature oracle.

The forward process follows the standard closed form
``z_t = sqrt(abar_t) * z_0 + sqrt(1 - abar_t) * eps`` with ``abar_t`` the
cumulative product of per-step alphas. The synthetic oracle builds
content-driven feature pyramids from any scalar volume so the full matching
pipeline runs without a pretrained network: per level, the volume is
downsampled, turned into channels (smoothed intensity at several widths plus
low-amplitude coordinate encodings that make descriptors injective), and then
noised at the requested timestep so larger timesteps degrade matching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .descriptor import FeatureLevel, FeatureSet
from .errors import ScheduleFormatError
from .volume import Volume3D, resample_trilinear

# Channel recipe constants: intensity content is standardized to unit scale
# per level, so the noise amplitude sqrt(1 - abar_t) is measured against it
# and the coordinate encodings stay weak enough that content dominates
# matching. The encodings still make every voxel's descriptor unique (the
# constant channel pins the scale so per-level L2 normalization cannot
# collide two distinct voxels).
RAMP_AMPLITUDE = 0.05
BIAS_VALUE = 0.5


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Cumulative-alpha table; ``alpha_bar[t-1]`` is the value at timestep t."""

    alpha_bar: np.ndarray

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64).ravel()
        if ab.size < 1:
            raise ValueError("schedule must contain at least one timestep")
        if not np.isfinite(ab).all() or (ab <= 0).any() or (ab > 1).any():
            raise ValueError("schedule values must lie in (0, 1]")
        if (np.diff(ab) > 0).any():
            raise ValueError("schedule must be non-increasing in t")
        object.__setattr__(self, "alpha_bar", ab)

    @property
    def max_timestep(self) -> int:
        return int(self.alpha_bar.size)

    def at(self, t: int) -> float:
        if not 1 <= t <= self.max_timestep:
            raise ValueError(f"timestep {t} outside schedule range [1, {self.max_timestep}]")
        return float(self.alpha_bar[t - 1])


@dataclass(frozen=True, eq=False)
class LatentVolume:
    """Multi-channel tensor; data shape (C, nz, ny, nx), float32."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 4 or min(data.shape) < 1:
            raise ValueError(f"latent data must be (C, nz, ny, nx), got shape {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        _, nz, ny, nx = self.data.shape
        return (nx, ny, nz)


def make_schedule(steps: int, beta_min: float = 1e-4, beta_max: float = 2e-2) -> NoiseSchedule:
    """Linear-beta schedule: alpha_bar_t = prod_{s<=t} (1 - beta_s)."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if not 0 < beta_min <= beta_max < 1:
        raise ValueError(f"need 0 < beta_min <= beta_max < 1, got ({beta_min}, {beta_max})")
    betas = np.linspace(beta_min, beta_max, steps, dtype=np.float64)
    return NoiseSchedule(np.cumprod(1.0 - betas))


def load_schedule(path) -> NoiseSchedule:
    """Read a schedule table: one alpha_bar value per line, line number = t."""
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            try:
                values.append(float(s))
            except ValueError:
                raise ScheduleFormatError(f"{path}: line {lineno}: not a number: {s!r}") from None
    if not values:
        raise ScheduleFormatError(f"{path}: empty schedule table")
    try:
        return NoiseSchedule(np.asarray(values))
    except ValueError as exc:
        raise ScheduleFormatError(f"{path}: {exc}") from None


def forward_noise(z0: LatentVolume, sched: NoiseSchedule, t: int, seed) -> LatentVolume:
    """Noise a latent to timestep t; identical seed gives identical output."""
    return LatentVolume(_noise_array(z0.data, sched.at(t), seed))


def _noise_array(data: np.ndarray, alpha_bar: float, seed) -> np.ndarray:
    if alpha_bar == 1.0:
        return data.copy()
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal(size=data.shape, dtype=np.float32)
    coef_signal = np.float32(math.sqrt(alpha_bar))
    coef_noise = np.float32(math.sqrt(1.0 - alpha_bar))
    return coef_signal * data + coef_noise * eps


def binomial_smooth(data: np.ndarray, passes: int) -> np.ndarray:
    """Separable [1, 2, 1]/4 smoothing applied ``passes`` times per axis."""
    out = np.asarray(data, dtype=np.float32)
    for _ in range(passes):
        for axis in range(out.ndim):
            padded = np.concatenate(
                [
                    np.take(out, [0], axis=axis),
                    out,
                    np.take(out, [out.shape[axis] - 1], axis=axis),
                ],
                axis=axis,
            )
            n = out.shape[axis]
            lo = np.take(padded, range(0, n), axis=axis)
            hi = np.take(padded, range(2, n + 2), axis=axis)
            out = 0.25 * lo + 0.5 * out + 0.25 * hi
    return out.astype(np.float32)


def _coordinate_ramp(shape_zyx: tuple[int, int, int], axis_xyz: int) -> np.ndarray:
    """Linear ramp along one axis, centered, amplitude RAMP_AMPLITUDE."""
    n = shape_zyx[2 - axis_xyz]
    ramp = RAMP_AMPLITUDE * ((np.arange(n, dtype=np.float32) + 0.5) / n - 0.5)
    view = [1, 1, 1]
    view[2 - axis_xyz] = n
    return np.broadcast_to(ramp.reshape(view), shape_zyx)


def _standardize(ch: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-std channel; zeros when essentially constant."""
    c = ch.astype(np.float64)
    c -= c.mean()
    scale = float(np.sqrt((c * c).mean()))
    if scale < 1e-6:
        return np.zeros(ch.shape, dtype=np.float32)
    return (c / scale).astype(np.float32)


def _structure_channels(content: np.ndarray, count: int) -> list[np.ndarray]:
    """Decorrelated local-structure channels: band-pass differences between
    smoothing widths, plus gradients (all translation-equivariant in the
    interior, unlike plain multi-width smoothings which are nearly
    collinear)."""
    chans: list[np.ndarray] = []
    s1 = binomial_smooth(content, 1)
    s2 = binomial_smooth(content, 2)
    chans.append(_standardize(s1 - s2))
    for axis in (2, 1, 0):  # d/dx, d/dy, d/dz on (z, y, x) arrays
        if len(chans) >= count:
            return chans[:count]
        chans.append(_standardize(np.gradient(s2, axis=axis)))
    prev = s2
    width = 4
    while len(chans) < count:
        cur = binomial_smooth(content, width)
        chans.append(_standardize(prev - cur))
        prev = cur
        width *= 2
    return chans[:count]


def _level_channels(base: np.ndarray, n_channels: int) -> np.ndarray:
    """Build one level's channel stack from a downsampled intensity grid."""
    shape = base.shape
    content = _standardize(base)
    channels = [_standardize(binomial_smooth(content, 1))]
    channels.append(np.full(shape, BIAS_VALUE, dtype=np.float32))
    for axis in range(3):
        channels.append(_coordinate_ramp(shape, axis))
    if len(channels) < n_channels:
        channels.extend(_structure_channels(content, n_channels - len(channels)))
    return np.stack(channels[:n_channels], axis=0).astype(np.float32)


def synth_features(
    vol: Volume3D,
    level_scales,
    channels_per_level,
    t: int,
    sched: NoiseSchedule,
    seed,
) -> FeatureSet:
    """Deterministic stand-in feature pyramid for a scalar volume.

    Level l has dims ``ceil(vol.dims / level_scales[l])`` and
    ``channels_per_level[l]`` channels, perturbed by the forward process at
    timestep t. Given one seed, each level draws its noise from an
    independent, reproducible stream.
    """
    scales = [float(s) for s in level_scales]
    counts = [int(c) for c in channels_per_level]
    if len(scales) != len(counts):
        raise ValueError(
            f"level_scales and channels_per_level differ in length ({len(scales)} vs {len(counts)})"
        )
    if any(s < 1 for s in scales):
        raise ValueError(f"downsample factors must be >= 1, got {scales}")
    if any(c < 1 for c in counts):
        raise ValueError(f"channel counts must be >= 1, got {counts}")
    alpha_bar = sched.at(t)  # validates t before any heavy work

    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(len(scales))
    levels = []
    for lid, (scale, n_ch) in enumerate(zip(scales, counts)):
        level_dims = tuple(max(1, math.ceil(n / scale)) for n in vol.dims)
        base = resample_trilinear(vol, level_dims).data
        z0 = _level_channels(base, n_ch)
        levels.append(FeatureLevel(level_id=lid, data=_noise_array(z0, alpha_bar, children[lid])))
    return FeatureSet(levels=levels, timestep=t, target_dims=vol.dims)
