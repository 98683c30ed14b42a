"""Command line for dumping model activations to an MDF feature container."""

from __future__ import annotations

import argparse
import json
import sys

from .extract import ExtractionSpec, extract
from .model import DEFAULT_BLOCKS


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mdf-extract", description=__doc__)
    p.add_argument("--model", required=True, help='"tiny" or a checkpoint path')
    p.add_argument("--t", type=int, default=20, help="noising timestep")
    p.add_argument(
        "--blocks",
        default=",".join(DEFAULT_BLOCKS),
        help="comma-separated decoder block names, in level-id order",
    )
    p.add_argument("--in", dest="volume", required=True, help="raw volume data file")
    p.add_argument("--sidecar", required=True, help="volume sidecar descriptor")
    p.add_argument("--out", required=True, help="output MDF path")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--steps", type=int, default=1000, help="schedule length")
    p.add_argument("--beta-min", type=float, default=1e-4)
    p.add_argument("--beta-max", type=float, default=2e-2)
    p.add_argument("--device", default="cpu")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = ExtractionSpec(
        model=args.model,
        volume=args.volume,
        sidecar=args.sidecar,
        out=args.out,
        timestep=args.t,
        blocks=tuple(b for b in args.blocks.split(",") if b),
        seed=args.seed,
        schedule_steps=args.steps,
        beta_min=args.beta_min,
        beta_max=args.beta_max,
        device=args.device,
    )
    try:
        out = extract(spec)
    except (ValueError, OSError) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps({"out": out, "t": spec.timestep, "blocks": list(spec.blocks)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
