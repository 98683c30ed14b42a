"""Batch command-line client for the correspondence service.

Each subcommand builds the matching service request and runs it in-process;
with ``--server URL`` the request is POSTed to a running service instead
(which must share the filesystem, since requests carry paths). Success prints
the response as one JSON line on stdout and exits 0; failures print one
machine-readable JSON error line on stderr and exit 2 for configuration
problems, 1 otherwise.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, VoxcorrError
from .service import ops, schemas


def _ints(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p != ""]


def _floats(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p != ""]


def _triple(text: str) -> tuple[float, float, float]:
    vals = _floats(text)
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated values, got {text!r}")
    return (vals[0], vals[1], vals[2])


def _int_triple(text: str) -> tuple[int, int, int]:
    vals = _ints(text)
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated integers, got {text!r}")
    return (vals[0], vals[1], vals[2])


def _level_sets(text: str) -> list[list[int]]:
    return [[int(ch) for ch in part] for part in text.split(":") if part]


def _add_schedule_args(p: argparse.ArgumentParser):
    p.add_argument("--schedule", help="alpha-bar table file (one value per line)")
    p.add_argument("--steps", type=int, default=1000, help="default schedule length")
    p.add_argument("--beta-min", type=float, default=1e-4)
    p.add_argument("--beta-max", type=float, default=2e-2)


def _schedule_spec(args) -> schemas.ScheduleSpec:
    return schemas.ScheduleSpec(
        path=args.schedule, steps=args.steps, beta_min=args.beta_min, beta_max=args.beta_max
    )


def _add_box_args(p: argparse.ArgumentParser):
    p.add_argument("--box", type=_int_triple, metavar="RX,RY,RZ", help="search half-widths")
    p.add_argument("--box-pct", type=float, help="percentile of displacement components")
    p.add_argument("--disp", help="displacement vectors file for --box-pct")
    p.add_argument(
        "--box-radius",
        action="store_true",
        help="take the percentile of Euclidean norms instead of per-axis components",
    )


def _box_spec(args) -> schemas.BoxSpec | None:
    if args.box is None and args.box_pct is None and args.disp is None:
        return None
    return schemas.BoxSpec(
        half_widths=args.box,
        pct=args.box_pct,
        displacements=args.disp,
        mode="radius" if args.box_radius else "per-axis",
    )


def _add_exec_args(p: argparse.ArgumentParser):
    p.add_argument(
        "--threads", type=int, help="worker threads (default: $VOXCORR_THREADS or 1)"
    )
    p.add_argument("--mem-budget", type=int, default=64, metavar="MIB", help="block working set")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voxcorr", description=__doc__)
    parser.add_argument("--server", help="POST requests to this service URL instead")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize oracle features from a volume into an MDF file")
    p.add_argument("--in", dest="volume", required=True, help="raw volume data file")
    p.add_argument("--sidecar", required=True, help="volume sidecar descriptor")
    p.add_argument("--scales", type=_floats, default=[16.0, 8.0, 4.0, 4.0])
    p.add_argument("--channels", type=_ints, default=[8, 8, 8, 8])
    p.add_argument("--t", type=int, default=20)
    _add_schedule_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-normalize", action="store_true", help="skip [0,1] intensity rescale")
    p.add_argument("--out", required=True, help="output MDF path")

    p = sub.add_parser("noise", help="forward-noise every level of an MDF file")
    p.add_argument("--in", dest="mdf_in", required=True)
    p.add_argument("--t", type=int, required=True)
    _add_schedule_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("match", help="find correspondences for query keypoints")
    p.add_argument("--mdf-a", required=True)
    p.add_argument("--mdf-b", required=True)
    p.add_argument("--keypoints", required=True, help="query coordinates in A's grid")
    p.add_argument("--levels", type=_ints, help="level ids to fuse, e.g. 0,1,2,3 (default all)")
    _add_box_args(p)
    _add_exec_args(p)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("eval", help="keypoint error metrics from predictions and ground truth")
    p.add_argument("--pred", help="predicted keypoints (single case)")
    p.add_argument("--gt", help="ground-truth keypoints (single case)")
    p.add_argument("--spacing", type=_triple, default=(1.0, 1.0, 1.0), metavar="SX,SY,SZ")
    p.add_argument("--case-id", default="case0")
    p.add_argument("--cases", help="manifest CSV: case_id,pred,gt,sx,sy,sz per line")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("sweep", help="timestep x level-subset ablation heatmap")
    p.add_argument("--vol-a", required=True)
    p.add_argument("--sidecar-a", required=True)
    p.add_argument("--vol-b", required=True)
    p.add_argument("--sidecar-b", required=True)
    p.add_argument("--queries", required=True, help="keypoints in A's grid")
    p.add_argument("--gt", required=True, help="corresponding keypoints in B's grid")
    p.add_argument("--t-values", type=_ints, required=True, metavar="T1,T2,...")
    p.add_argument(
        "--level-sets",
        type=_level_sets,
        required=True,
        metavar="0:01:012:0123",
        help="colon-separated digit strings naming level subsets",
    )
    p.add_argument("--scales", type=_floats, default=[16.0, 8.0, 4.0, 4.0])
    p.add_argument("--channels", type=_ints, default=[8, 8, 8, 8])
    _add_schedule_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-normalize", action="store_true")
    _add_box_args(p)
    _add_exec_args(p)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("simmap", help="similarity map of one query against all of B")
    p.add_argument("--mdf-a", required=True)
    p.add_argument("--mdf-b", required=True)
    p.add_argument("--query", type=_triple, required=True, metavar="X,Y,Z")
    p.add_argument("--levels", type=_ints)
    p.add_argument("--spacing", type=_triple, default=(1.0, 1.0, 1.0))
    p.add_argument("--origin", type=_triple, default=(0.0, 0.0, 0.0))
    p.add_argument("--mem-budget", type=int, default=64, metavar="MIB")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def _read_cases_manifest(path) -> list[schemas.EvalCase]:
    cases = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = [p.strip() for p in s.split(",")]
            if len(parts) != 6:
                raise ConfigError(
                    [f"{path}: line {lineno}: expected 'case_id,pred,gt,sx,sy,sz', got {s!r}"]
                )
            try:
                spacing = (float(parts[3]), float(parts[4]), float(parts[5]))
            except ValueError:
                raise ConfigError([f"{path}: line {lineno}: bad spacing in {s!r}"]) from None
            cases.append(
                schemas.EvalCase(case_id=parts[0], pred=parts[1], gt=parts[2], spacing=spacing)
            )
    return cases


def _build_request(args):
    if args.command == "synth":
        return "synth", schemas.SynthRequest(
            volume=args.volume,
            sidecar=args.sidecar,
            scales=args.scales,
            channels=args.channels,
            t=args.t,
            schedule=_schedule_spec(args),
            seed=args.seed,
            normalize=not args.no_normalize,
            out=args.out,
        )
    if args.command == "noise":
        return "noise", schemas.NoiseRequest(
            mdf_in=args.mdf_in,
            t=args.t,
            schedule=_schedule_spec(args),
            seed=args.seed,
            out=args.out,
        )
    if args.command == "match":
        return "match", schemas.MatchRequest(
            mdf_a=args.mdf_a,
            mdf_b=args.mdf_b,
            keypoints=args.keypoints,
            levels=args.levels,
            box=_box_spec(args),
            threads=args.threads,
            mem_budget_mib=args.mem_budget,
            out_dir=args.out,
        )
    if args.command == "eval":
        problems = []
        if args.cases and (args.pred or args.gt):
            problems.append("give either --cases or --pred/--gt, not both")
        if not args.cases and not (args.pred and args.gt):
            problems.append("need --pred and --gt, or a --cases manifest")
        if problems:
            raise ConfigError(problems)
        if args.cases:
            cases = _read_cases_manifest(args.cases)
        else:
            cases = [
                schemas.EvalCase(
                    case_id=args.case_id, pred=args.pred, gt=args.gt, spacing=args.spacing
                )
            ]
        return "eval", schemas.EvalRequest(cases=cases, out_dir=args.out)
    if args.command == "sweep":
        return "sweep", schemas.SweepRequest(
            volume_a=args.vol_a,
            sidecar_a=args.sidecar_a,
            volume_b=args.vol_b,
            sidecar_b=args.sidecar_b,
            queries=args.queries,
            ground_truth=args.gt,
            t_values=args.t_values,
            level_sets=args.level_sets,
            scales=args.scales,
            channels=args.channels,
            schedule=_schedule_spec(args),
            seed=args.seed,
            normalize=not args.no_normalize,
            box=_box_spec(args),
            threads=args.threads,
            mem_budget_mib=args.mem_budget,
            out_dir=args.out,
        )
    if args.command == "simmap":
        return "simmap", schemas.SimmapRequest(
            mdf_a=args.mdf_a,
            mdf_b=args.mdf_b,
            query=args.query,
            levels=args.levels,
            spacing=args.spacing,
            origin=args.origin,
            mem_budget_mib=args.mem_budget,
            out_dir=args.out,
        )
    raise ConfigError([f"unknown command {args.command!r}"])


_HANDLERS = {
    "synth": ops.run_synth,
    "noise": ops.run_noise,
    "match": ops.run_match,
    "eval": ops.run_eval,
    "sweep": ops.run_sweep,
    "simmap": ops.run_simmap,
}


def _post(server: str, op: str, request) -> int:
    import httpx

    url = server.rstrip("/") + "/v1/" + op
    resp = httpx.post(url, json=request.model_dump(), timeout=None)
    if resp.status_code == 200:
        print(resp.text)
        return 0
    print(resp.text, file=sys.stderr)
    return 2 if resp.status_code == 422 else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        uvicorn.run("voxcorr.service.app:app", host=args.host, port=args.port)
        return 0
    try:
        op, request = _build_request(args)
        if args.server:
            return _post(args.server, op, request)
        response = _HANDLERS[op](request)
    except ConfigError as exc:
        print(
            json.dumps({"error": "invalid configuration", "problems": exc.problems}),
            file=sys.stderr,
        )
        return 2
    except (VoxcorrError, ValueError, OSError) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(response.model_dump()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
