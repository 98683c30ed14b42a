"""Bridge from a pretrained 3D latent diffusion model to MDF feature files."""

from .extract import ExtractionSpec, extract
from .model import DEFAULT_BLOCKS, LatentUNet3D, build_tiny, load_model, save_checkpoint

__version__ = "0.1.0"
