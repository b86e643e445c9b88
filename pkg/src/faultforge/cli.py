"""``faultforge`` command line.

Offline: ``scenarios`` -> ``inject`` -> ``predict`` -> ``evaluate`` -> ``build-lut``.
Online emulation: ``query`` and ``bench``.

Exit codes: 0 success, 1 I/O or data error, 2 usage, 3 partial failure,
4 condition not covered by the table.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from . import faultlut, genai_client
from .errors import ChecksumError, FaultForgeError
from .image import read_png, write_png
from .metrics import summaries_from_csv, summarize
from .perception import (
    LanePoint,
    PredictionRecord,
    estimate_lane_center,
    gen_synthetic_track,
    read_predictions,
    write_predictions,
)
from .scenario import CATEGORY_NAMES, category, generate_scenarios, parse_scenario_file, write_scenario_file

log = logging.getLogger("faultforge")

EXIT_OK, EXIT_DATA, EXIT_USAGE, EXIT_PARTIAL, EXIT_NOT_COVERED = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_DATA):
        super().__init__(message)
        self.code = code


# --- configuration ---------------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    input_dir: Optional[str] = None
    output_dir: Optional[str] = None
    scenario_file: Optional[str] = None
    backend_mode: str = "stub"
    gate_threshold: float = genai_client.DEFAULT_GATE_THRESHOLD
    bucket_count: int = faultlut.DEFAULT_BUCKETS
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.backend_mode not in ("stub", "remote"):
            raise ValueError(f"backend_mode must be 'stub' or 'remote', not {self.backend_mode!r}")
        if not -1.0 <= self.gate_threshold <= 1.0:
            raise ValueError("gate_threshold must lie in [-1, 1]")
        if not 2 <= self.bucket_count <= 64:
            raise ValueError("bucket_count must lie in [2, 64]")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def _parse_value(raw: str):
    raw = raw.strip()
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        return raw[1:-1]
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw


def read_config_file(path) -> Dict[str, object]:
    """Flat ``key = value`` file; ``#`` starts a comment, ``[section]`` headers are ignored."""
    known = {f.name for f in fields(PipelineConfig)}
    out = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip() if not line.lstrip().startswith(("'", '"')) else line.strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise CliError(f"{path}:{line_no}: expected key = value", EXIT_USAGE)
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in known:
            raise CliError(f"{path}:{line_no}: unknown config key {key!r}", EXIT_USAGE)
        out[key] = _parse_value(value)
    return out


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Defaults, overridden by the config file, overridden by flags."""
    values: Dict[str, object] = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for f in fields(PipelineConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    try:
        return PipelineConfig(**values)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid configuration: {exc}", EXIT_USAGE) from None


# --- commands ---------------------------------------------------------------------


def cmd_scenarios(args) -> int:
    cfg = resolve_config(args)
    scenarios = generate_scenarios(args.category, args.count, cfg.master_seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(write_scenario_file(scenarios))
    print(f"wrote {len(scenarios)} scenarios to {out}")
    return EXIT_OK


def cmd_fixtures(args) -> int:
    cfg = resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for k, (image, truth) in enumerate(gen_synthetic_track(args.count, cfg.master_seed)):
        image_id = f"track_{k:05d}"
        write_png(image, out / f"{image_id}.png")
        lines.append(json.dumps({"image_id": image_id, "x": truth.x, "y": truth.y}, sort_keys=True))
    (out / "truth.jsonl").write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    print(f"wrote {args.count} fixtures to {out}")
    return EXIT_OK


def _load_scenarios(path: Path):
    data = path.read_bytes()
    fmt = "jsonl" if data.lstrip()[:1] == b"{" else "pipe_text"
    return parse_scenario_file(data, fmt)


def _backend(cfg: PipelineConfig):
    """(synthesizer, scorer) pair for the configured backend mode."""
    if cfg.backend_mode == "stub":
        stub = genai_client.LocalStub()
        return stub, stub
    eps = genai_client.endpoints_from_env()
    missing = [v for k, v in (("ldm", genai_client.ENV_LDM_URL), ("clip", genai_client.ENV_CLIP_URL)) if k not in eps]
    if missing:
        raise CliError(f"remote backend needs {', '.join(missing)}", EXIT_USAGE)
    return genai_client.RemoteClient(eps["ldm"]), genai_client.RemoteClient(eps["clip"])


def _inject_one(image_path: Path, scenarios, out_dir: Path, cfg: PipelineConfig) -> List[dict]:
    # one base image in memory per worker
    image_id = image_path.stem
    try:
        base = read_png(image_path)
    except (OSError, FaultForgeError) as exc:
        return [_manifest_row(image_id, s, None, None, "failed", str(exc)) for s in scenarios]
    synth, scorer = _backend(cfg)
    rows = []
    try:
        for s in scenarios:
            key = f"{s.folder_name()}/{image_id}"
            try:
                degraded = synth.synth_image(base, s)
                if isinstance(scorer, genai_client.LocalStub):
                    scorer.register_base(key, base, s.strength)
                score = scorer.score_fidelity(degraded, s.description, image_id=key)
            except FaultForgeError as exc:
                rows.append(_manifest_row(image_id, s, None, None, "failed", f"{type(exc).__name__}: {exc}"))
                continue
            accepted, _ = genai_client.gate([(s.scenario_id, score)], cfg.gate_threshold)
            if not accepted:
                rows.append(_manifest_row(image_id, s, None, score, "rejected"))
                continue
            target = out_dir / key
            target = target.with_name(f"{image_id}.png")
            target.parent.mkdir(parents=True, exist_ok=True)
            write_png(degraded, target)
            rows.append(_manifest_row(image_id, s, target.relative_to(out_dir).as_posix(), score, "ok"))
    finally:
        for client in {id(synth): synth, id(scorer): scorer}.values():
            if isinstance(client, genai_client.RemoteClient):
                client.close()
    return rows


def _manifest_row(image_id, s, output, score, status, error=None) -> dict:
    row = {
        "image_id": image_id,
        "scenario_id": s.scenario_id,
        "category": s.category.name,
        "group": s.folder_name(),
        "strength": s.strength,
        "seed": s.seed,
        "output": output,
        "fidelity": score,
        "status": status,
    }
    if error:
        row["error"] = error
    return row


def cmd_inject(args) -> int:
    cfg = resolve_config(args)
    images_dir = Path(args.images or cfg.input_dir or "")
    scen_path = Path(args.scenarios or cfg.scenario_file or "")
    out_dir = Path(args.out or cfg.output_dir or "")
    if not images_dir.is_dir():
        raise CliError(f"image directory not found: {images_dir}")
    if not scen_path.is_file():
        raise CliError(f"scenario file not found: {scen_path}")
    if not str(out_dir):
        raise CliError("no output directory given", EXIT_USAGE)
    scenarios = _load_scenarios(scen_path)
    images = sorted(images_dir.glob("*.png"))
    if not images:
        raise CliError(f"no PNG images in {images_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)

    manifest = out_dir / "manifest.jsonl"
    failed = 0
    total = 0
    with manifest.open("w", encoding="utf-8") as fh, ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        # map() yields in submission order, so the manifest is identical for any worker count
        for rows in pool.map(lambda p: _inject_one(p, scenarios, out_dir, cfg), images):
            for row in rows:
                fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")
                failed += row["status"] == "failed"
                total += 1
    print(f"{total} manifest rows, {failed} failed -> {out_dir}")
    return EXIT_PARTIAL if failed else EXIT_OK


def _read_jsonl(path: Path) -> List[dict]:
    out = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if line.strip():
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CliError(f"{path}:{line_no}: {exc.msg}") from None
    return out


def cmd_predict(args) -> int:
    images_dir = Path(args.images)
    truth_path = Path(args.truth) if args.truth else images_dir / "truth.jsonl"
    if not truth_path.is_file():
        raise CliError(f"truth file not found: {truth_path}")
    truths = {r["image_id"]: LanePoint(r["x"], r["y"]) for r in _read_jsonl(truth_path)}
    records = []

    def predict(group, image_id, path):
        if image_id not in truths:
            raise CliError(f"no ground truth for image {image_id!r}")
        pred = estimate_lane_center(read_png(path))
        records.append(PredictionRecord(image_id, group, truths[image_id], pred))

    for path in sorted(images_dir.glob("*.png")):
        predict(args.baseline_group, path.stem, path)
    if args.faults:
        faults = Path(args.faults)
        for row in _read_jsonl(faults / "manifest.jsonl"):
            if row.get("status") == "ok":
                predict(row["group"], row["image_id"], faults / row["output"])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(write_predictions(records))
    print(f"wrote {len(records)} predictions to {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .report import write_report

    path = Path(args.predictions)
    if not path.is_file():
        raise CliError(f"predictions file not found: {path}")
    records = read_predictions(path.read_bytes())
    summaries = summarize(records)
    if args.baseline_group not in summaries:
        raise CliError(f"baseline group {args.baseline_group!r} not present in {path}")
    paths = write_report(args.out, records, summaries, args.baseline_group, figures=not args.no_figures)
    sys.stdout.write(paths["table"].read_text(encoding="utf-8"))
    return EXIT_OK


def _group_strength(group: str) -> Optional[Tuple[str, float]]:
    """Category and strength from a ``CATEGORY_QUALIFIER_NNN`` folder name (NNN = strength x 100)."""
    for name in sorted(CATEGORY_NAMES, key=len, reverse=True):
        if group.startswith(name + "_"):
            m = re.search(r"_(\d{3})$", group)
            if m and int(m.group(1)) <= 100:
                return name, int(m.group(1)) / 100.0
    return None


def cmd_build_lut(args) -> int:
    cfg = resolve_config(args)
    metrics_path = Path(args.metrics)
    if not metrics_path.is_file():
        raise CliError(f"metrics file not found: {metrics_path}")
    summaries = summaries_from_csv(metrics_path.read_text(encoding="utf-8"))
    lookup: Dict[str, Tuple[str, float]] = {}
    if args.manifest:
        for row in _read_jsonl(Path(args.manifest)):
            lookup[row["group"]] = (row["category"], float(row["strength"]))
    items = []
    for s in summaries:
        key = lookup.get(s.group) or _group_strength(s.group)
        if key is None:
            log.info("skipping group %s: no category/strength mapping", s.group)
            continue
        items.append((category(key[0]), key[1], s))
    if not items:
        raise CliError("no fault groups could be mapped to (category, strength)")
    table = faultlut.build(items, cfg.bucket_count)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    faultlut.save(table, out)
    if args.csv:
        Path(args.csv).write_text(faultlut.entries_to_csv(table), encoding="utf-8")
    print(f"wrote {len(table)} entries ({table.nbytes} bytes) to {out}")
    return EXIT_OK


def _load_lut(path: str) -> faultlut.FaultLookupTable:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"table not found: {p}")
    try:
        return faultlut.load(p)
    except ChecksumError as exc:
        raise CliError(f"ChecksumError: {exc}") from None


def cmd_query(args) -> int:
    table = _load_lut(args.lut)
    if not 0.0 <= args.strength <= 1.0:
        raise CliError("strength must lie in [0, 1]", EXIT_USAGE)
    entry = table.query(category(args.category), args.strength)
    if entry is None:
        print(f"{args.category} @ {args.strength}: NOT COVERED")
        return EXIT_NOT_COVERED
    print(
        f"{entry.category.name} bucket={entry.bucket} n={entry.n} r2={entry.r2:.4f} "
        f"rmse={entry.rmse:.4f} mae={entry.mae:.4f} within_010={entry.within_010:.3f} "
        f"within_020={entry.within_020:.3f} risk={entry.risk.name.lower()}"
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    table = _load_lut(args.lut)
    if args.iters < 1000:
        raise CliError("--iters must be >= 1000", EXIT_USAGE)
    report = faultlut.bench_query(table, args.iters, seed=args.seed, check_allocations=args.allocations)
    print(report)
    return EXIT_OK


# --- parser -----------------------------------------------------------------------


def _category_arg(value: str) -> str:
    name = value.strip().upper()
    if name not in CATEGORY_NAMES:
        raise argparse.ArgumentTypeError(f"unknown category {value!r}; valid categories: {', '.join(CATEGORY_NAMES)}")
    return name


def _positive(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="faultforge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")

    p = sub.add_parser("scenarios", parents=[common], help="generate a scenario JSONL batch")
    p.add_argument("--category", type=_category_arg, required=True)
    p.add_argument("--count", type=_positive, required=True)
    p.add_argument("--seed", dest="master_seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scenarios)

    p = sub.add_parser("fixtures", parents=[common], help="write synthetic track frames and truth.jsonl")
    p.add_argument("--count", type=_positive, required=True)
    p.add_argument("--seed", dest="master_seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fixtures)

    p = sub.add_parser("inject", parents=[common], help="degrade every image under every scenario")
    p.add_argument("--images")
    p.add_argument("--scenarios")
    p.add_argument("--out")
    p.add_argument("--backend", dest="backend_mode", choices=["stub", "remote"])
    p.add_argument("--gate-threshold", dest="gate_threshold", type=float)
    p.add_argument("--workers", type=_positive)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("predict", parents=[common], help="run the classical lane estimator over clean and faulted frames")
    p.add_argument("--images", required=True)
    p.add_argument("--faults")
    p.add_argument("--truth")
    p.add_argument("--baseline-group", default="NORMAL")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="per-group metrics, comparison table and figures")
    p.add_argument("--predictions", required=True)
    p.add_argument("--baseline-group", default="NORMAL")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("build-lut", parents=[common], help="distil metrics.csv into a .flut table")
    p.add_argument("--metrics", required=True)
    p.add_argument("--manifest", help="inject manifest mapping groups to category and strength")
    p.add_argument("--buckets", dest="bucket_count", type=int)
    p.add_argument("--csv", help="also write the entries as CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_lut)

    p = sub.add_parser("query", parents=[common], help="look up one fault condition")
    p.add_argument("--lut", required=True)
    p.add_argument("--category", type=_category_arg, required=True)
    p.add_argument("--strength", type=float, required=True)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("bench", parents=[common], help="query latency report")
    p.add_argument("--lut", required=True)
    p.add_argument("--iters", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--allocations", action="store_true", help="also count allocating queries")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"faultforge: error: {exc}", file=sys.stderr)
        return exc.code
    except (FaultForgeError, OSError) as exc:
        print(f"faultforge: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
