"""Command line driver for reproducible marking experiments.

A JSON experiment spec names the window, the score model, the input process
and the marking policies; the subcommands then stage configurations,
markings and estimates into an output directory as JSON plus a normalized
results.csv.  Reruns with the same spec and seed are byte-identical up to
the elapsed_ms column, whatever the thread count.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, fields, replace

from . import exact
from .core import (
    Configuration,
    UnsupportedModelError,
    ValidationError,
    Window,
    WorkCapError,
    dump_configuration,
    load_configuration,
    substream_id,
    window_from_json,
    window_to_json,
)
from .estimate import (
    _SEARCH_STREAM,
    Policy,
    ReplicateRecord,
    parse_policy,
    read_results_csv,
    record_to_row,
    run_replicates,
    sample_configuration,
    search_params_from_json,
    summarize_records,
    write_json,
    write_results_csv,
)
from .models import MODEL_KINDS, ScoreModel, build_model
from .optimize import SearchParams, initialize_marks, local_search, total_window_score

CLI_BRUTE_CAP = 10**6  # enumeration budget for the exact command


@dataclass
class ExperimentSpec:
    name: str
    window: Window
    model: ScoreModel
    intensity: float | None
    policies: list[Policy]
    search: SearchParams
    replicates: int
    seed: int


def load_experiment_spec(path: str) -> ExperimentSpec:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"spec file not found: {path}")
    except json.JSONDecodeError as err:
        raise ValidationError(f"spec is not valid JSON: {err}")
    if not isinstance(obj, dict):
        raise ValidationError("spec must be a JSON object")
    allowed = {"name", "window", "model", "intensity", "policies", "search", "replicates", "seed"}
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ValidationError(f"unknown spec fields {unknown}")
    name = obj.get("name")
    if not isinstance(name, str) or not name:
        raise ValidationError("spec needs a non-empty string name")
    window = window_from_json(obj.get("window"))
    model_obj = obj.get("model")
    if not isinstance(model_obj, dict) or "kind" not in model_obj:
        raise ValidationError("spec needs a model object with a kind")
    kind = model_obj["kind"]
    if kind not in MODEL_KINDS:
        raise ValidationError(f"unknown model kind {kind!r}, expected one of {MODEL_KINDS}")
    params = {k: v for k, v in model_obj.items() if k != "kind"}
    for key in ("popularity",):
        if key in params and isinstance(params[key], list):
            params[key] = tuple(params[key])
    try:
        model = build_model(kind, **params)
    except TypeError as err:
        raise ValidationError(f"bad model parameters: {err}")
    model.validate_for_window(window)
    intensity = obj.get("intensity")
    if window.kind == "cube":
        if not isinstance(intensity, (int, float)) or not intensity > 0.0:
            raise ValidationError("cube windows need a positive intensity")
        intensity = float(intensity)
    elif intensity is not None:
        raise ValidationError("graph windows take no intensity")
    policies_obj = obj.get("policies", [])
    if not isinstance(policies_obj, list):
        raise ValidationError("policies must be a list")
    policies = [parse_policy(p) for p in policies_obj]
    search = search_params_from_json(obj.get("search"))
    replicates = obj.get("replicates", 20)
    if not isinstance(replicates, int) or replicates < 0:
        raise ValidationError(f"replicates must be a nonnegative integer, got {replicates!r}")
    seed = obj.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ValidationError(f"seed must be an integer in [0, 2^64), got {seed!r}")
    return ExperimentSpec(name, window, model, intensity, policies, search, replicates, seed)


def _model_manifest(model: ScoreModel) -> dict:
    out = {"kind": model.kind}
    for f in fields(model):
        if f.name in ("kind", "sign_regime"):
            continue
        value = getattr(model, f.name)
        if isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


def write_manifest(out_dir: str, spec: ExperimentSpec, seed: int) -> None:
    write_json(
        os.path.join(out_dir, "manifest.json"),
        {
            "name": spec.name,
            "window": window_to_json(spec.window),
            "model": _model_manifest(spec.model),
            "intensity": spec.intensity,
            "replicates": spec.replicates,
            "seed": seed,
        },
    )


def _config_path(out_dir: str, replicate: int) -> str:
    return os.path.join(out_dir, "configs", f"rep_{replicate:05d}.json")


def _load_replicate_config(out_dir: str, spec: ExperimentSpec, replicate: int) -> Configuration:
    path = _config_path(out_dir, replicate)
    if not os.path.exists(path):
        raise ValidationError(f"missing {path}; run generate into this directory first")
    c = load_configuration(path)
    if c.model_id != spec.model.kind:
        raise ValidationError(
            f"{path} holds a {c.model_id} configuration, spec wants {spec.model.kind}"
        )
    return c


def cmd_generate(spec: ExperimentSpec, out_dir: str, seed: int, threads: int) -> int:
    os.makedirs(os.path.join(out_dir, "configs"), exist_ok=True)
    for k in range(spec.replicates):
        c = sample_configuration(spec.model, spec.window, spec.intensity, seed, k)
        dump_configuration(c, _config_path(out_dir, k))
    write_manifest(out_dir, spec, seed)
    print(f"generated {spec.replicates} configurations in {out_dir}/configs")
    return 0


def cmd_optimize(spec: ExperimentSpec, out_dir: str, seed: int, threads: int) -> int:
    os.makedirs(os.path.join(out_dir, "marked"), exist_ok=True)
    import time
    from concurrent.futures import ThreadPoolExecutor

    def worker(k: int):
        start = time.perf_counter()
        c = _load_replicate_config(out_dir, spec, k)
        params = replace(spec.search, seed=substream_id(seed, _SEARCH_STREAM, k))
        initial = initialize_marks(c, spec.model, params)
        final, trace = local_search(initial, spec.model, params)
        total = total_window_score(final, spec.model)
        dump_configuration(final, os.path.join(out_dir, "marked", f"rep_{k:05d}.json"))
        elapsed = (time.perf_counter() - start) * 1e3
        record = ReplicateRecord(
            replicate=k,
            seed=seed,
            n_points=final.n_points,
            total_score=total,
            admissible=math.isfinite(total),
            elapsed_ms=elapsed,
        )
        info = {
            "replicate": k,
            "certificate": trace.certificate,
            "rounds": len(trace.steps),
            "swap_evaluations": trace.swap_evaluations,
            "initial_total": trace.initial_total,
            "final_total": total,
        }
        return record, info

    if threads == 1:
        results = [worker(k) for k in range(spec.replicates)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(worker, range(spec.replicates)))
    rows = [record_to_row(spec.name, "local-search", rec) for rec, _ in results]
    write_results_csv(os.path.join(out_dir, "results.csv"), rows)
    certificates: dict[str, int] = {}
    for _, info in results:
        certificates[info["certificate"]] = certificates.get(info["certificate"], 0) + 1
    write_json(
        os.path.join(out_dir, "optimize_summary.json"),
        {"certificates": certificates, "traces": [info for _, info in results]},
    )
    write_manifest(out_dir, spec, seed)
    print(f"optimized {spec.replicates} replicates; certificates: {certificates}")
    return 0


def _enumeration_work(c: Configuration, model: ScoreModel) -> int | None:
    work = max(c.n_points, 1)
    for i in range(c.n_points):
        cand = model.mark_candidates(c, i)
        if cand is None:
            return None
        work *= len(cand)
        if work > exact.BRUTE_FORCE_CAP:
            return work
    return work


def exact_marking(c: Configuration, model: ScoreModel) -> tuple[Configuration, dict]:
    """Best available certified marking for one configuration."""
    kind = model.kind
    if kind in ("hardcore", "caching", "wr_line", "wr_tree", "matching"):
        work = _enumeration_work(c, model)
        if kind == "matching":
            result = exact.matching_optimum(c)
            return result.configuration, {
                "method": "permutations",
                "value": result.value,
                "multiplicity": result.multiplicity,
            }
        if work is not None and work <= CLI_BRUTE_CAP:
            result = exact.brute_force_optimum(c, model)
            marked = c.with_opt_marks(dict(enumerate(result.marks)))
            return marked, {
                "method": "brute",
                "value": result.value,
                "multiplicity": result.multiplicity,
            }
        if kind == "wr_line":
            resolution = exact.wr_unique_marking(c)
            marked = exact.wr_marks_to_configuration(c, resolution.marks)
            return marked, {
                "method": "chain-dp",
                "anchors": len(resolution.anchors),
                "segments": len(resolution.segments),
                "flags": resolution.flags,
            }
        raise WorkCapError(
            f"{kind} instance with {c.n_points} points is too large for enumeration"
        )
    if kind == "lilypond":
        result = exact.lilypond_solve(c)
        marked = exact.lilypond_radii_configuration(c, result.radii)
        return marked, {"method": "growth", "residual": result.residual}
    if kind == "aloha":
        marked = exact.aloha_optimal_marking(c, model.beta)
        return marked, {"method": "separable-argmax"}
    raise UnsupportedModelError(f"no exact route for {kind}")


def cmd_exact(spec: ExperimentSpec, out_dir: str, seed: int, threads: int) -> int:
    os.makedirs(os.path.join(out_dir, "exact"), exist_ok=True)
    import time
    from concurrent.futures import ThreadPoolExecutor

    def worker(k: int):
        start = time.perf_counter()
        c = _load_replicate_config(out_dir, spec, k)
        marked, info = exact_marking(c, spec.model)
        total = total_window_score(marked, spec.model)
        dump_configuration(marked, os.path.join(out_dir, "exact", f"rep_{k:05d}.json"))
        elapsed = (time.perf_counter() - start) * 1e3
        record = ReplicateRecord(
            replicate=k,
            seed=seed,
            n_points=marked.n_points,
            total_score=total,
            admissible=math.isfinite(total),
            elapsed_ms=elapsed,
        )
        return record, {"replicate": k, **info}

    if threads == 1:
        results = [worker(k) for k in range(spec.replicates)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(worker, range(spec.replicates)))
    rows = [record_to_row(spec.name, "exact", rec) for rec, _ in results]
    write_results_csv(os.path.join(out_dir, "results_exact.csv"), rows)
    write_json(
        os.path.join(out_dir, "exact_summary.json"),
        {"solutions": [info for _, info in results]},
    )
    write_manifest(out_dir, spec, seed)
    print(f"solved {spec.replicates} replicates exactly")
    return 0


def cmd_estimate(spec: ExperimentSpec, out_dir: str, seed: int, threads: int) -> int:
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    summary = {}
    for policy in spec.policies:
        if policy.name == "local-search" and policy.search is None:
            policy = replace(policy, search=spec.search)
        records = run_replicates(
            spec.model,
            spec.window,
            policy,
            intensity=spec.intensity,
            replicates=spec.replicates,
            seed=seed,
            threads=threads,
        )
        rows.extend(record_to_row(spec.name, policy.label, r) for r in records)
        est = summarize_records(records, spec.window)
        summary[policy.label] = {
            "mean": est.mean,
            "stderr": est.stderr,
            "ci95": list(est.ci95),
            "replicates": est.replicates,
            "inadmissible_fraction": est.inadmissible_fraction,
        }
    write_results_csv(os.path.join(out_dir, "results.csv"), rows)
    write_json(os.path.join(out_dir, "estimate_summary.json"), summary)
    write_manifest(out_dir, spec, seed)
    for label, entry in summary.items():
        print(f"{spec.name} {label}: mean {entry['mean']:.6g} +- {entry['stderr']:.2g}")
    if not summary:
        print(f"{spec.name}: no policies requested")
    return 0


def _read_manifest(out_dir: str) -> dict:
    path = os.path.join(out_dir, "manifest.json")
    if not os.path.exists(path):
        raise ValidationError(f"missing {path}")
    with open(path) as fh:
        return json.load(fh)


def _abs_gap(a: float, b: float) -> float:
    if a == b:
        return 0.0
    if math.isinf(a) or math.isinf(b):
        return math.inf
    return abs(a - b)


def cmd_compare(dir_a: str, dir_b: str, report_path: str | None) -> int:
    name_a = _read_manifest(dir_a).get("name")
    name_b = _read_manifest(dir_b).get("name")
    if name_a != name_b:
        raise ValidationError(f"experiment names differ: {name_a!r} vs {name_b!r}")
    rows_a = {}
    rows_b = {}
    for out_dir, rows in ((dir_a, rows_a), (dir_b, rows_b)):
        path = os.path.join(out_dir, "results.csv")
        if not os.path.exists(path):
            raise ValidationError(f"missing {path}")
        for row in read_results_csv(path):
            rows[(row["policy"], row["replicate"])] = row
    shared = sorted(set(rows_a) & set(rows_b))
    max_total_gap = 0.0
    max_points_gap = 0
    admissible_mismatches = 0
    for key in shared:
        ra, rb = rows_a[key], rows_b[key]
        max_total_gap = max(max_total_gap, _abs_gap(ra["total_score"], rb["total_score"]))
        max_points_gap = max(max_points_gap, abs(ra["n_points"] - rb["n_points"]))
        admissible_mismatches += ra["admissible"] != rb["admissible"]
    report = {
        "experiment": name_a,
        "rows_compared": len(shared),
        "only_in_a": len(rows_a) - len(shared),
        "only_in_b": len(rows_b) - len(shared),
        "max_total_score_gap": max_total_gap,
        "max_n_points_gap": max_points_gap,
        "admissible_mismatches": admissible_mismatches,
    }
    if report_path:
        write_json(report_path, report)
    print(
        f"compared {len(shared)} rows: max total score gap {max_total_gap:.3g}, "
        f"{admissible_mismatches} admissibility mismatches"
    )
    return 0


def _resolve_threads(value: int | None) -> int:
    if value is None:
        env = os.environ.get("MARKOPT_THREADS")
        if env is None:
            return 1
        try:
            value = int(env)
        except ValueError:
            raise ValidationError(f"MARKOPT_THREADS must be an integer, got {env!r}")
    if value < 1:
        raise ValidationError(f"threads must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="markopt",
        description="simulate, optimize and estimate stationary markings of point processes",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("generate", "sample replicate configurations"),
        ("optimize", "run local search on generated configurations"),
        ("exact", "solve generated configurations with certified routes"),
        ("estimate", "estimate score intensities under the spec policies"),
    ):
        q = sub.add_parser(name, help=text)
        q.add_argument("--spec", required=True, help="experiment spec JSON")
        q.add_argument("--out", required=True, help="output directory")
        q.add_argument("--seed", type=int, default=None, help="override the spec seed")
        q.add_argument("--threads", type=int, default=None, help="worker threads (or MARKOPT_THREADS)")
    q = sub.add_parser("compare", help="diff the results of two runs")
    q.add_argument("dir_a")
    q.add_argument("dir_b")
    q.add_argument("--report", default=None, help="write the comparison JSON here")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            return cmd_compare(args.dir_a, args.dir_b, args.report)
        spec = load_experiment_spec(args.spec)
        seed = spec.seed if args.seed is None else args.seed
        if not 0 <= seed < 2**64:
            raise ValidationError(f"seed must be in [0, 2^64), got {seed}")
        threads = _resolve_threads(args.threads)
        handler = {
            "generate": cmd_generate,
            "optimize": cmd_optimize,
            "exact": cmd_exact,
            "estimate": cmd_estimate,
        }[args.command]
        return handler(spec, args.out, seed, threads)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except UnsupportedModelError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except WorkCapError as err:
        print(f"refused: {err}", file=sys.stderr)
        return 3
    except AssertionError as err:
        print(f"internal invariant violated: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
