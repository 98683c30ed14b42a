"""Extract decoder activations from a frozen 3D latent diffusion model.

Pipeline per the feature-extraction recipe: encode the preprocessed volume
to a latent, noise it to timestep t with the closed-form forward process,
run one denoising pass through the frozen U-Net, and capture each hooked
decoder block's output (cloned at hook time, before any later layer can
touch it). Activations are dumped raw: all fusion and normalization
semantics live in the consuming engine, so model features and synthetic
features are treated identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .mdf import write_mdf
from .model import DEFAULT_BLOCKS, load_model


@dataclass(frozen=True)
class ExtractionSpec:
    model: str  # "tiny" or a checkpoint path
    volume: str  # raw volume data file
    sidecar: str  # volume descriptor
    out: str  # output MDF path
    timestep: int = 20
    blocks: tuple[str, ...] = DEFAULT_BLOCKS  # hooked blocks, in level-id order
    seed: int = 0
    schedule_steps: int = 1000
    beta_min: float = 1e-4
    beta_max: float = 2e-2
    device: str = "cpu"
    dims_multiple: int = 128
    extra: dict = field(default_factory=dict)


def read_raw_volume(data_path, sidecar_path):
    """Minimal raw+sidecar reader (dims required; x-fastest float32 data)."""
    fields = {}
    with open(sidecar_path, "r", encoding="utf-8") as fh:
        for line in fh:
            s = line.strip()
            if not s or s.startswith("#") or ":" not in s:
                continue
            key, _, rest = s.partition(":")
            fields[key.strip()] = [p.strip() for p in rest.split(",")]
    if "dims" not in fields:
        raise ValueError(f"{sidecar_path}: missing 'dims'")
    nx, ny, nz = (int(v) for v in fields["dims"])
    data = np.fromfile(data_path, dtype="<f4")
    if data.size != nx * ny * nz:
        raise ValueError(
            f"{data_path}: holds {data.size} voxels, sidecar dims {(nx, ny, nz)}"
            f" require {nx * ny * nz}"
        )
    return data.reshape(nz, ny, nx), (nx, ny, nz)


def alpha_bar(spec: ExtractionSpec) -> float:
    if spec.timestep < 1 or spec.timestep > spec.schedule_steps:
        raise ValueError(
            f"timestep {spec.timestep} outside schedule range [1, {spec.schedule_steps}]"
        )
    betas = np.linspace(spec.beta_min, spec.beta_max, spec.schedule_steps, dtype=np.float64)
    return float(np.cumprod(1.0 - betas)[spec.timestep - 1])


def _check_preprocessed(data: np.ndarray, dims, multiple: int):
    bad = [n for n in dims if n % multiple != 0]
    if bad:
        raise ValueError(
            f"volume dims {dims} must be multiples of {multiple}; offending extents: {bad}"
        )
    lo, hi = float(data.min()), float(data.max())
    if lo < -1e-6 or hi > 1.0 + 1e-6:
        raise ValueError(
            f"volume intensities must be normalized to [0, 1]; found range [{lo}, {hi}]"
        )


def extract(spec: ExtractionSpec) -> str:
    """Run the extraction and write the MDF file; returns the output path."""
    model = load_model(spec.model).to(spec.device)
    for p in model.parameters():
        p.requires_grad_(False)

    available = model.decoder_block_names()
    missing = [b for b in spec.blocks if b not in available]
    if missing:
        raise ValueError(f"blocks {missing} not found in model; available: {available}")
    if not spec.blocks:
        raise ValueError("at least one block must be hooked")

    data, dims = read_raw_volume(spec.volume, spec.sidecar)
    _check_preprocessed(data, dims, spec.dims_multiple)

    captured: dict[str, torch.Tensor] = {}

    def make_hook(name):
        def hook(_module, _inputs, output):
            captured[name] = output.detach().clone()

        return hook

    handles = [model.get_submodule(b).register_forward_hook(make_hook(b)) for b in spec.blocks]
    try:
        with torch.no_grad():
            volume = torch.from_numpy(np.ascontiguousarray(data)).reshape(
                1, 1, *data.shape
            ).to(spec.device)
            z0 = model.encode(volume)
            a = alpha_bar(spec)
            gen = torch.Generator(device=spec.device).manual_seed(spec.seed)
            eps = torch.randn(z0.shape, generator=gen, device=spec.device, dtype=z0.dtype)
            z_t = math.sqrt(a) * z0 + math.sqrt(1.0 - a) * eps
            model(z_t)
    finally:
        for h in handles:
            h.remove()

    levels = []
    for level_id, name in enumerate(spec.blocks):
        act = captured[name].squeeze(0).cpu().numpy().astype(np.float32)
        levels.append((level_id, act))
    write_mdf(levels, spec.timestep, dims, spec.out)
    return spec.out
