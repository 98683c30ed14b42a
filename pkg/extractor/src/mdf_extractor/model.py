"""Tiny 3D latent diffusion stand-in with hookable decoder blocks.

A convolutional encoder compresses the input volume 4x per axis into a
latent; a small U-Net runs one denoising pass over the noised latent. The
four decoder blocks sit at 1/16, 1/8, 1/4 and 1/4 of the latent resolution
(two blocks share the finest decoder scale), matching the resolution ladder
the downstream engine fuses. Weights are random but seeded, so a given
checkpoint-free config is fully reproducible; real pretrained weights can be
loaded from a checkpoint file instead.
"""

from __future__ import annotations

import torch
from torch import nn

LATENT_DOWNSAMPLE = 4
DEFAULT_BLOCKS = ("dec_b0", "dec_b1", "dec_b2", "dec_b3")

TINY_CONFIG = {
    "latent_channels": 4,
    "base_channels": 8,
    "init_seed": 0,
}


def _conv_block(c_in: int, c_out: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv3d(c_in, c_out, kernel_size=3, padding=1),
        nn.SiLU(),
        nn.Conv3d(c_out, c_out, kernel_size=3, padding=1),
        nn.SiLU(),
    )


class LatentUNet3D(nn.Module):
    """Encoder to latent space plus a U-Net denoiser over the latent.

    Decoder blocks are addressable by name for forward hooks:
    ``dec_b0`` (latent/16), ``dec_b1`` (latent/8), ``dec_b2`` and ``dec_b3``
    (both latent/4).
    """

    def __init__(self, latent_channels: int = 4, base_channels: int = 8):
        super().__init__()
        zc, bc = latent_channels, base_channels
        self.config = {"latent_channels": zc, "base_channels": bc}

        self.encoder = nn.Conv3d(
            1, zc, kernel_size=LATENT_DOWNSAMPLE, stride=LATENT_DOWNSAMPLE
        )

        self.in_conv = nn.Conv3d(zc, bc, kernel_size=3, padding=1)  # latent/1
        self.down1 = nn.Conv3d(bc, bc, kernel_size=3, stride=2, padding=1)  # latent/2
        self.down2 = nn.Conv3d(bc, bc + 2, kernel_size=3, stride=2, padding=1)  # latent/4
        self.down3 = nn.Conv3d(bc + 2, bc + 4, kernel_size=3, stride=2, padding=1)  # latent/8
        self.down4 = nn.Conv3d(bc + 4, bc + 4, kernel_size=3, stride=2, padding=1)  # latent/16

        self.dec_b0 = _conv_block(bc + 4, bc + 4)  # latent/16
        self.up1 = nn.ConvTranspose3d(bc + 4, bc + 4, kernel_size=2, stride=2)
        self.dec_b1 = _conv_block(2 * (bc + 4), bc + 2)  # latent/8, skip from down3
        self.up2 = nn.ConvTranspose3d(bc + 2, bc + 2, kernel_size=2, stride=2)
        self.dec_b2 = _conv_block(2 * (bc + 2), bc + 2)  # latent/4, skip from down2
        self.dec_b3 = _conv_block(bc + 2, bc)  # latent/4
        self.up3 = nn.ConvTranspose3d(bc, bc, kernel_size=2, stride=2)  # latent/2
        self.up4 = nn.ConvTranspose3d(bc, bc, kernel_size=2, stride=2)  # latent/1
        self.out_conv = nn.Conv3d(bc, zc, kernel_size=3, padding=1)

    def encode(self, volume: torch.Tensor) -> torch.Tensor:
        """(1, 1, nz, ny, nx) volume to (1, zc, nz/4, ny/4, nx/4) latent."""
        return self.encoder(volume)

    def forward(self, z_t: torch.Tensor) -> torch.Tensor:
        h0 = self.in_conv(z_t)
        h1 = self.down1(h0)
        h2 = self.down2(h1)
        h3 = self.down3(h2)
        h4 = self.down4(h3)
        d0 = self.dec_b0(h4)
        d1 = self.dec_b1(torch.cat([self.up1(d0), h3], dim=1))
        d2 = self.dec_b2(torch.cat([self.up2(d1), h2], dim=1))
        d3 = self.dec_b3(d2)
        out = self.up4(self.up3(d3))
        return self.out_conv(out)

    def decoder_block_names(self) -> list[str]:
        return [name for name, _ in self.named_children() if name.startswith("dec_")]


def build_tiny() -> LatentUNet3D:
    """Random-weight smoke-test model; the fixed init seed makes it a
    reproducible stand-in for shipped weights."""
    generator_state = torch.random.get_rng_state()
    try:
        torch.manual_seed(TINY_CONFIG["init_seed"])
        model = LatentUNet3D(TINY_CONFIG["latent_channels"], TINY_CONFIG["base_channels"])
    finally:
        torch.random.set_rng_state(generator_state)
    model.eval()
    return model


def save_checkpoint(model: LatentUNet3D, path) -> None:
    torch.save({"config": model.config, "state_dict": model.state_dict()}, path)


def load_model(path_or_name: str) -> LatentUNet3D:
    """``"tiny"`` for the built-in config, otherwise a checkpoint path."""
    if path_or_name == "tiny":
        return build_tiny()
    payload = torch.load(path_or_name, map_location="cpu", weights_only=True)
    model = LatentUNet3D(**payload["config"])
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
