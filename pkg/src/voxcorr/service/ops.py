"""Workflow handlers shared by the HTTP routes and the CLI client.

Each handler validates its request (collecting every problem before
raising), runs the engine, writes deterministic artifacts, and returns a
response model. Artifacts embed the resolved configuration for provenance,
except execution knobs (threads, memory budget) which by the determinism
contract cannot affect results and are therefore not part of it.
"""

from __future__ import annotations

import os

import numpy as np

from .. import __version__ as _VERSION
from ..descriptor import DescriptorSampler, FeatureLevel, FeatureSet
from ..diffusion import LatentVolume, NoiseSchedule, forward_noise, load_schedule, make_schedule, synth_features
from ..errors import ConfigError
from ..io_formats import (
    read_keypoints,
    read_mdf,
    read_raw_volume,
    write_keypoints,
    write_mdf,
    write_raw_volume,
    write_report,
)
from ..matcher import MatchResult, match_boxed, match_global, similarity_map
from ..metrics import CaseErrors, aggregate, box_from_percentile, keypoint_errors, sweep_aggregate
from ..volume import KeypointSet, normalize_intensity
from . import schemas

THREADS_ENV = "VOXCORR_THREADS"


def _require_file(problems: list[str], path, what: str):
    if not path:
        problems.append(f"{what}: no path given")
    elif not os.path.isfile(path):
        problems.append(f"{what}: file not found: {path}")


def _resolve_threads(threads: int | None, problems: list[str]) -> int:
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        if env is None:
            return 1
        try:
            threads = int(env)
        except ValueError:
            problems.append(f"{THREADS_ENV}: not an integer: {env!r}")
            return 1
    if threads < 1:
        problems.append(f"threads must be >= 1, got {threads}")
        return 1
    return threads


def _resolve_schedule(spec: schemas.ScheduleSpec, problems: list[str]) -> NoiseSchedule | None:
    if spec.path is not None:
        if not os.path.isfile(spec.path):
            problems.append(f"schedule: file not found: {spec.path}")
            return None
        return load_schedule(spec.path)
    try:
        return make_schedule(spec.steps, spec.beta_min, spec.beta_max)
    except ValueError as exc:
        problems.append(f"schedule: {exc}")
        return None


def _schedule_echo(spec: schemas.ScheduleSpec) -> dict:
    if spec.path is not None:
        return {"path": spec.path}
    return {"steps": spec.steps, "beta_min": spec.beta_min, "beta_max": spec.beta_max}


def _validate_box(box: schemas.BoxSpec | None, problems: list[str]):
    if box is None:
        return
    if box.half_widths is not None and box.pct is not None:
        problems.append("box: give either half_widths or pct, not both")
    if box.pct is not None:
        if not 0 < box.pct <= 100:
            problems.append(f"box: pct must be in (0, 100], got {box.pct}")
        _require_file(problems, box.displacements, "box displacements")
    elif box.displacements is not None:
        problems.append("box: displacements given without pct")
    if box.half_widths is not None and any(h < 0 for h in box.half_widths):
        problems.append(f"box: half widths must be >= 0, got {box.half_widths}")
    if box.mode not in ("per-axis", "radius"):
        problems.append(f"box: unknown mode {box.mode!r}")
    if box.half_widths is None and box.pct is None:
        problems.append("box: needs half_widths or pct")


def _resolve_box(box: schemas.BoxSpec | None):
    """Half-widths tuple or None for a global search, plus a config echo."""
    if box is None:
        return None, {"kind": "global"}
    if box.half_widths is not None:
        hw = tuple(int(h) for h in box.half_widths)
        return hw, {"kind": "half-widths", "half_widths": list(hw)}
    disp = read_keypoints(box.displacements).points
    hw = box_from_percentile(disp, pct=box.pct, mode=box.mode)
    return hw, {
        "kind": "percentile",
        "pct": box.pct,
        "mode": box.mode,
        "displacements": box.displacements,
        "resolved_half_widths": list(hw),
        "percentile_units": "voxels",
    }


def _check_levels(fs: FeatureSet, levels, what: str, problems: list[str]):
    if levels is None:
        return
    missing = sorted(set(int(i) for i in levels) - set(fs.level_ids))
    if missing:
        problems.append(f"{what}: levels {missing} not present (available: {fs.level_ids})")


def _sampler(fs: FeatureSet, levels, what: str, problems: list[str]) -> DescriptorSampler | None:
    if fs.target_dims is None:
        problems.append(f"{what}: container has no target dims; re-export it with one")
        return None
    _check_levels(fs, levels, what, problems)
    if problems:
        return None
    return DescriptorSampler(fs, level_ids=levels)


def _mem_budget_bytes(mib: int, problems: list[str]) -> int:
    if mib < 1:
        problems.append(f"mem_budget_mib must be >= 1, got {mib}")
        return 64 << 20
    return mib << 20


def _raise_if(problems: list[str]):
    if problems:
        raise ConfigError(problems)


def run_synth(req: schemas.SynthRequest) -> schemas.SynthResponse:
    problems: list[str] = []
    _require_file(problems, req.volume, "volume")
    _require_file(problems, req.sidecar, "sidecar")
    if len(req.scales) != len(req.channels):
        problems.append(
            f"scales and channels differ in length ({len(req.scales)} vs {len(req.channels)})"
        )
    if not req.scales:
        problems.append("at least one level scale is required")
    sched = _resolve_schedule(req.schedule, problems)
    if sched is not None and not 1 <= req.t <= sched.max_timestep:
        problems.append(f"t={req.t} outside schedule range [1, {sched.max_timestep}]")
    _raise_if(problems)

    vol = read_raw_volume(req.volume, req.sidecar)
    if req.normalize:
        vol = normalize_intensity(vol)
    fs = synth_features(vol, req.scales, req.channels, req.t, sched, req.seed)
    write_mdf(fs, req.out)
    report_path = req.out + ".json"
    config = {
        "command": "synth",
        "volume": req.volume,
        "sidecar": req.sidecar,
        "scales": list(req.scales),
        "channels": list(req.channels),
        "t": req.t,
        "schedule": _schedule_echo(req.schedule),
        "seed": req.seed,
        "normalize": req.normalize,
        "out": req.out,
    }
    write_report(
        {"config": config, "level_dims": [list(lv.dims) for lv in fs.levels]}, report_path
    )
    return schemas.SynthResponse(
        out=req.out,
        report=report_path,
        timestep=req.t,
        level_dims=[lv.dims for lv in fs.levels],
    )


def run_noise(req: schemas.NoiseRequest) -> schemas.NoiseResponse:
    problems: list[str] = []
    _require_file(problems, req.mdf_in, "mdf_in")
    sched = _resolve_schedule(req.schedule, problems)
    if sched is not None and not 1 <= req.t <= sched.max_timestep:
        problems.append(f"t={req.t} outside schedule range [1, {sched.max_timestep}]")
    _raise_if(problems)

    fs = read_mdf(req.mdf_in)
    children = np.random.SeedSequence(req.seed).spawn(len(fs.levels))
    noised = [
        FeatureLevel(lv.level_id, forward_noise(LatentVolume(lv.data), sched, req.t, child).data)
        for lv, child in zip(fs.levels, children)
    ]
    out_fs = FeatureSet(levels=noised, timestep=req.t, target_dims=fs.target_dims)
    write_mdf(out_fs, req.out)
    report_path = req.out + ".json"
    config = {
        "command": "noise",
        "mdf_in": req.mdf_in,
        "t": req.t,
        "schedule": _schedule_echo(req.schedule),
        "seed": req.seed,
        "out": req.out,
    }
    write_report({"config": config}, report_path)
    return schemas.NoiseResponse(out=req.out, report=report_path, timestep=req.t)


def _match_once(ds_a, ds_b, queries, half_widths, threads, budget):
    if half_widths is None:
        return match_global(ds_a, ds_b, queries, threads=threads, mem_budget_bytes=budget)
    return match_boxed(
        ds_a, ds_b, queries, half_widths, threads=threads, mem_budget_bytes=budget
    )


def run_match(req: schemas.MatchRequest) -> schemas.MatchResponse:
    problems: list[str] = []
    _require_file(problems, req.mdf_a, "mdf_a")
    _require_file(problems, req.mdf_b, "mdf_b")
    _require_file(problems, req.keypoints, "keypoints")
    _validate_box(req.box, problems)
    threads = _resolve_threads(req.threads, problems)
    budget = _mem_budget_bytes(req.mem_budget_mib, problems)
    _raise_if(problems)

    fs_a = read_mdf(req.mdf_a)
    fs_b = read_mdf(req.mdf_b)
    ds_a = _sampler(fs_a, req.levels, "mdf_a", problems)
    ds_b = _sampler(fs_b, req.levels, "mdf_b", problems)
    _raise_if(problems)
    queries = read_keypoints(req.keypoints, frame="A")
    half_widths, box_echo = _resolve_box(req.box)

    results = _match_once(ds_a, ds_b, queries, half_widths, threads, budget)
    matched = [r for r in results if isinstance(r, MatchResult)]
    failures = [
        {"index": i, "query": list(r.query), "reason": r.reason}
        for i, r in enumerate(results)
        if not isinstance(r, MatchResult)
    ]

    os.makedirs(req.out_dir, exist_ok=True)
    pred_path = os.path.join(req.out_dir, "predictions.csv")
    write_keypoints(
        KeypointSet(np.array([r.match for r in matched], dtype=np.float64).reshape(-1, 3), "B"),
        pred_path,
    )
    report_path = os.path.join(req.out_dir, "report.json")
    config = {
        "command": "match",
        "mdf_a": req.mdf_a,
        "mdf_b": req.mdf_b,
        "keypoints": req.keypoints,
        "levels": ds_a.level_ids,
        "t_a": fs_a.timestep,
        "t_b": fs_b.timestep,
        "box": box_echo,
    }
    write_report(
        {
            "config": config,
            "n_queries": len(queries),
            "n_matched": len(matched),
            "n_failed": len(failures),
            "failures": failures,
            "matches": [
                {
                    "query": list(r.query),
                    "match": list(r.match),
                    "score": r.score,
                    "searched_candidates": r.searched_candidates,
                }
                for r in matched
            ],
        },
        report_path,
    )
    mean_score = float(np.mean([r.score for r in matched])) if matched else None
    return schemas.MatchResponse(
        predictions=pred_path,
        report=report_path,
        n_queries=len(queries),
        n_matched=len(matched),
        n_failed=len(failures),
        mean_score=mean_score,
    )


def run_eval(req: schemas.EvalRequest) -> schemas.EvalResponse:
    problems: list[str] = []
    if not req.cases:
        problems.append("at least one case is required")
    for case in req.cases:
        _require_file(problems, case.pred, f"case {case.case_id}: pred")
        _require_file(problems, case.gt, f"case {case.case_id}: gt")
        if any(s <= 0 for s in case.spacing):
            problems.append(f"case {case.case_id}: spacing must be positive, got {case.spacing}")
    _raise_if(problems)

    case_errors = []
    for case in req.cases:
        pred = read_keypoints(case.pred)
        gt = read_keypoints(case.gt)
        if len(pred) != len(gt):
            problems.append(
                f"case {case.case_id}: {len(pred)} predictions vs {len(gt)} ground-truth points"
            )
            continue
        if len(pred) == 0:
            problems.append(f"case {case.case_id}: no keypoints")
            continue
        case_errors.append(CaseErrors(case.case_id, keypoint_errors(pred, gt, case.spacing)))
    _raise_if(problems)

    config = {
        "command": "eval",
        "cases": [
            {"case_id": c.case_id, "pred": c.pred, "gt": c.gt, "spacing": list(c.spacing)}
            for c in req.cases
        ],
    }
    report = aggregate(case_errors, config=config)
    os.makedirs(req.out_dir, exist_ok=True)
    report_path = os.path.join(req.out_dir, "report.json")
    write_report(report.to_dict(), report_path)
    return schemas.EvalResponse(
        report=report_path,
        case_mean_mm=report.case_mean,
        case_std_mm=report.case_std,
        keypoint_mean_mm=report.keypoint_mean,
        keypoint_std_mm=report.keypoint_std,
        n_cases=report.n_cases,
        n_keypoints=report.n_keypoints,
    )


def _level_label(level_ids) -> str:
    return "".join(str(i) for i in sorted(level_ids))


def run_sweep(req: schemas.SweepRequest) -> schemas.SweepResponse:
    problems: list[str] = []
    _require_file(problems, req.volume_a, "volume_a")
    _require_file(problems, req.sidecar_a, "sidecar_a")
    _require_file(problems, req.volume_b, "volume_b")
    _require_file(problems, req.sidecar_b, "sidecar_b")
    _require_file(problems, req.queries, "queries")
    _require_file(problems, req.ground_truth, "ground_truth")
    if len(req.scales) != len(req.channels):
        problems.append(
            f"scales and channels differ in length ({len(req.scales)} vs {len(req.channels)})"
        )
    if not req.t_values:
        problems.append("at least one timestep is required")
    if not req.level_sets:
        problems.append("at least one level subset is required")
    n_levels = len(req.scales)
    for subset in req.level_sets:
        bad = [i for i in subset if not 0 <= i < n_levels]
        if bad or not subset:
            problems.append(f"level subset {subset!r} invalid for {n_levels} synthesized levels")
    _validate_box(req.box, problems)
    sched = _resolve_schedule(req.schedule, problems)
    if sched is not None:
        for t in req.t_values:
            if not 1 <= t <= sched.max_timestep:
                problems.append(f"t={t} outside schedule range [1, {sched.max_timestep}]")
    threads = _resolve_threads(req.threads, problems)
    budget = _mem_budget_bytes(req.mem_budget_mib, problems)
    _raise_if(problems)

    vol_a = read_raw_volume(req.volume_a, req.sidecar_a)
    vol_b = read_raw_volume(req.volume_b, req.sidecar_b)
    if req.normalize:
        vol_a = normalize_intensity(vol_a)
        vol_b = normalize_intensity(vol_b)
    queries = read_keypoints(req.queries, frame="A")
    gt = read_keypoints(req.ground_truth, frame="B")
    if len(queries) != len(gt) or len(queries) == 0:
        raise ConfigError(
            [f"queries ({len(queries)}) and ground truth ({len(gt)}) must pair up non-empty"]
        )
    half_widths, box_echo = _resolve_box(req.box)

    cells = {}
    failures = {}
    for t in req.t_values:
        fs_a = synth_features(
            vol_a, req.scales, req.channels, t, sched, np.random.SeedSequence([req.seed, t, 0])
        )
        fs_b = synth_features(
            vol_b, req.scales, req.channels, t, sched, np.random.SeedSequence([req.seed, t, 1])
        )
        for subset in req.level_sets:
            label = _level_label(subset)
            ds_a = DescriptorSampler(fs_a, level_ids=subset)
            ds_b = DescriptorSampler(fs_b, level_ids=subset)
            results = _match_once(ds_a, ds_b, queries, half_widths, threads, budget)
            ok = [(i, r) for i, r in enumerate(results) if isinstance(r, MatchResult)]
            n_failed = len(results) - len(ok)
            if n_failed:
                failures[f"t={t},levels={label}"] = n_failed
            if not ok:
                continue
            pred = KeypointSet(np.array([r.match for _, r in ok], dtype=np.float64), frame="B")
            gt_ok = KeypointSet(gt.points[[i for i, _ in ok]], frame="B")
            errors = keypoint_errors(pred, gt_ok, vol_b.spacing)
            cells[(t, label)] = aggregate([CaseErrors("pair", errors)])

    table = sweep_aggregate(cells)
    os.makedirs(req.out_dir, exist_ok=True)
    csv_path = os.path.join(req.out_dir, "heatmap.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(table.to_csv())
    report_path = os.path.join(req.out_dir, "report.json")
    config = {
        "command": "sweep",
        "volume_a": req.volume_a,
        "volume_b": req.volume_b,
        "queries": req.queries,
        "ground_truth": req.ground_truth,
        "t_values": list(req.t_values),
        "level_sets": [sorted(s) for s in req.level_sets],
        "scales": list(req.scales),
        "channels": list(req.channels),
        "schedule": _schedule_echo(req.schedule),
        "seed": req.seed,
        "normalize": req.normalize,
        "box": box_echo,
    }
    write_report(
        {"config": config, "heatmap": table.to_dict(), "failed_queries": failures}, report_path
    )
    return schemas.SweepResponse(
        csv=csv_path,
        report=report_path,
        level_labels=table.level_labels,
        t_values=table.t_values,
    )


def run_simmap(req: schemas.SimmapRequest) -> schemas.SimmapResponse:
    problems: list[str] = []
    _require_file(problems, req.mdf_a, "mdf_a")
    _require_file(problems, req.mdf_b, "mdf_b")
    budget = _mem_budget_bytes(req.mem_budget_mib, problems)
    _raise_if(problems)

    fs_a = read_mdf(req.mdf_a)
    fs_b = read_mdf(req.mdf_b)
    ds_a = _sampler(fs_a, req.levels, "mdf_a", problems)
    ds_b = _sampler(fs_b, req.levels, "mdf_b", problems)
    _raise_if(problems)

    vol = similarity_map(
        ds_a, req.query, ds_b, spacing=req.spacing, origin=req.origin, mem_budget_bytes=budget
    )
    nx, ny, _ = vol.dims
    flat_idx = int(np.argmax(vol.data.ravel()))
    best = (flat_idx % nx, (flat_idx // nx) % ny, flat_idx // (nx * ny))
    best_score = float(vol.data.ravel()[flat_idx])

    os.makedirs(req.out_dir, exist_ok=True)
    data_path = os.path.join(req.out_dir, "simmap.raw")
    sidecar_path = os.path.join(req.out_dir, "simmap.txt")
    write_raw_volume(vol, data_path, sidecar_path)
    report_path = os.path.join(req.out_dir, "report.json")
    config = {
        "command": "simmap",
        "mdf_a": req.mdf_a,
        "mdf_b": req.mdf_b,
        "query": list(req.query),
        "levels": ds_a.level_ids,
        "spacing": list(req.spacing),
        "origin": list(req.origin),
    }
    write_report(
        {"config": config, "best_match": list(best), "best_score": best_score}, report_path
    )
    return schemas.SimmapResponse(
        data=data_path,
        sidecar=sidecar_path,
        report=report_path,
        best_match=best,
        best_score=best_score,
    )


def health() -> schemas.HealthResponse:
    return schemas.HealthResponse(status="ok", version=_VERSION)
