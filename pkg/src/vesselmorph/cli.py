"""``vesselmorph`` command line: analyze, batch, stats, plot, synth.

Exit codes: 0 success, 1 usage or configuration error, 2 partial failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config
from .ingest import (
    MANIFEST_COLUMNS, IngestError, LabeledFundus, classify_refraction, manifest_rows, parse_row, quality_gate,
    read_disc, read_mask,
)
from .morphometry import FLAT_COLUMNS, MorphometryRecord, analyze_image, flatten
from .plot import write_plots
from .stats import InsufficientData, cohort_tables, read_tables_json
from .synth import SynthSpec, SynthSpecError, generate_cohort, write_single

log = logging.getLogger("vesselmorph")

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL = 0, 1, 2


class UsageError(Exception):
    pass


def _err(kind, message, **extra):
    payload = {"level": "error", "kind": kind, "message": message}
    payload.update(extra)
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def _dump(obj):
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


# ------------------------------------------------------------------ analyze

def analyze_record(record, cfg):
    """Gate and analyze one record; returns a JSON-ready dict."""
    result = {"id": record.id, "status": "ok", "records": []}
    if cfg.quality_gate:
        gate = quality_gate(record, cfg.quality())
        if not gate:
            result["status"] = "rejected"
            result["reasons"] = [r.value for r in gate.reasons]
            return result
    if cfg.exclude_hyperopia_at is not None and classify_refraction(record.ser, cfg.exclude_hyperopia_at) is None:
        result["status"] = "rejected"
        result["reasons"] = ["Hyperopia"]
        return result
    recs = analyze_image(record, cfg.morphometry())
    result["records"] = [r.to_json() for r in recs]
    if any(not r.ok for r in recs):
        result["status"] = "partial"
    return result


def cmd_analyze(args, cfg):
    if args.manifest:
        if not args.id:
            raise UsageError("--manifest needs --id")
        rows = [r for r in manifest_rows(args.manifest) if r.get("id") == args.id]
        if not rows:
            raise UsageError(f"id {args.id!r} not in manifest")
        try:
            record = parse_row(rows[0], Path(args.manifest).parent)
        except IngestError as exc:
            raise UsageError(str(exc)) from None
    else:
        for name in ("artery", "vein", "disc"):
            p = getattr(args, name)
            if not p:
                raise UsageError(f"--{name} is required without --manifest")
            if not Path(p).is_file():
                raise UsageError(f"--{name} file not found: {p}")
        try:
            record = LabeledFundus(args.id or Path(args.artery).stem, "Right", args.ser, None,
                                   read_mask(args.artery), read_mask(args.vein), read_disc(args.disc))
        except (IngestError, OSError, ValueError) as exc:
            raise UsageError(str(exc)) from None
    cfg = cfg.replace(quality_gate=bool(args.gate))
    result = analyze_record(record, cfg)
    text = _dump(result)
    if cfg.out:
        out = Path(cfg.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if result["status"] == "rejected":
        _err("QualityGate", "image rejected", id=record.id, reasons=result["reasons"])
        return EXIT_PARTIAL
    for r in result["records"]:
        if "error" in r:
            _err("SystemFailure", r["error"], id=record.id, system=r["system"])
    return EXIT_PARTIAL if result["status"] == "partial" else EXIT_OK


# ------------------------------------------------------------------ batch

def _batch_job(job):
    row, base, line, cfg = job
    try:
        record = parse_row(row, Path(base), line)
    except IngestError as exc:
        return {"id": row.get("id"), "status": "failed", "line": line, "message": str(exc)}
    try:
        return analyze_record(record, cfg)
    except Exception as exc:  # one bad image must not stop the batch
        return {"id": record.id, "status": "failed", "line": line, "message": f"{type(exc).__name__}: {exc}"}


def run_batch(manifest, out_dir, cfg, workers=1):
    """Process a manifest; returns the summary dict. Outputs are sorted by image id."""
    manifest = Path(manifest)
    out = Path(out_dir)
    (out / "metrics").mkdir(parents=True, exist_ok=True)
    jobs, results = [], []
    with open(manifest, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        absent = [c for c in MANIFEST_COLUMNS if c not in (reader.fieldnames or [])]
        if absent:
            raise UsageError(f"manifest header lacks columns {absent}")
        for row in reader:
            if None in row or any(v is None for v in row.values()):
                results.append({"id": row.get("id"), "status": "failed", "line": reader.line_num,
                                "message": "wrong number of fields"})
                continue
            jobs.append((row, str(manifest.parent), reader.line_num, cfg))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results += list(pool.map(_batch_job, jobs, chunksize=1))
    else:
        results += [_batch_job(j) for j in jobs]
    results.sort(key=lambda r: (str(r.get("id")), r.get("line", 0)))

    flat, entries = [], []
    counts = {"accepted": 0, "rejected": 0, "failed": 0, "partial": 0}
    for r in results:
        status = r["status"]
        if status in ("ok", "partial"):
            counts["accepted"] += 1
            if status == "partial":
                counts["partial"] += 1
            (out / "metrics" / f"{r['id']}.json").write_text(_dump(r), encoding="utf-8")
            for rec in r["records"]:
                flat.append(flatten_json(rec))
        else:
            counts[status] += 1
        entry = {"id": r.get("id"), "status": status}
        if "reasons" in r:
            entry["detail"] = ";".join(r["reasons"])
        elif "message" in r:
            entry["detail"] = r["message"]
        else:
            entry["detail"] = ";".join(f"{x['system']}:{x['error']}" for x in r.get("records", []) if "error" in x)
        entries.append(entry)
        if status == "failed":
            log.warning("row %s (%s): %s", r.get("line"), r.get("id"), r.get("message"))
    _write_csv(out / "metrics.csv", FLAT_COLUMNS, flat)
    _write_csv(out / "summary.csv", ["id", "status", "detail"], entries)
    summary = {"total": len(results), **counts}
    (out / "summary.json").write_text(_dump(summary), encoding="utf-8")
    return summary


def flatten_json(rec_json):
    return flatten(MorphometryRecord.from_json(rec_json))


def _write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})


def cmd_batch(args, cfg):
    if not Path(args.manifest).is_file():
        raise UsageError(f"manifest not found: {args.manifest}")
    if not cfg.out:
        raise UsageError("batch needs --out")
    summary = run_batch(args.manifest, cfg.out, cfg, cfg.workers)
    log.info("batch: %s", summary)
    print(_dump(summary), end="")
    return EXIT_OK


# ------------------------------------------------------------------ stats / plot

def load_metrics(path):
    p = Path(path)
    if p.is_dir():
        p = p / "metrics.csv"
    if not p.is_file():
        raise UsageError(f"metrics CSV not found: {p}")
    with open(p, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def manifest_groups(path, exclude_hyperopia_at=None):
    """(image id -> group, image id -> subject id) from a manifest CSV."""
    groups, subjects = {}, {}
    for row in manifest_rows(path):
        try:
            g = classify_refraction(row["ser_diopters"], exclude_hyperopia_at)
        except (IngestError, ValueError, KeyError):
            continue
        if g is not None:
            groups[row["id"]] = g
        if row.get("subject_id"):
            subjects[row["id"]] = row["subject_id"]
    return groups, subjects


def cmd_stats(args, cfg):
    if not Path(args.manifest).is_file():
        raise UsageError(f"manifest not found: {args.manifest}")
    if not cfg.out:
        raise UsageError("stats needs --out")
    rows = load_metrics(args.metrics)
    groups, subjects = manifest_groups(args.manifest, cfg.exclude_hyperopia_at)
    try:
        table = cohort_tables(rows, groups, posthoc=cfg.posthoc,
                              subjects=subjects if cfg.unit == "subject" else None)
    except InsufficientData as exc:
        raise UsageError(str(exc)) from None
    paths = table.write(cfg.out)
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    return EXIT_OK


def cmd_plot(args, cfg):
    p = Path(args.tables)
    if p.is_dir():
        p = p / "tables.json"
    if not p.is_file():
        raise UsageError(f"tables JSON not found: {p}")
    if not cfg.out:
        raise UsageError("plot needs --out")
    try:
        tables = read_tables_json(p)
    except json.JSONDecodeError as exc:
        raise UsageError(f"bad tables JSON: {exc}") from None
    paths = write_plots(tables, cfg.out, all_parameters=args.all or cfg.plot_all)
    log.info("wrote %d plots", len(paths))
    return EXIT_OK


# ------------------------------------------------------------------ synth

def parse_effect(text):
    """``GROUP:SYSTEM.PARAM=OFFSET`` -> (group, (system, param), offset)."""
    try:
        lhs, value = text.split("=", 1)
        group, target = lhs.split(":", 1)
        system, param = target.split(".", 1)
        return group, (system, param), float(value)
    except ValueError:
        raise UsageError(f"bad --effect {text!r}; expected GROUP:SYSTEM.PARAM=OFFSET") from None


def cmd_synth(args, cfg):
    if not cfg.out:
        raise UsageError("synth needs --out")
    if args.spec:
        try:
            with open(args.spec, encoding="utf-8") as fh:
                spec = SynthSpec.from_json(json.load(fh))
        except OSError as exc:
            raise UsageError(f"cannot read spec: {exc.strerror}") from None
        except (json.JSONDecodeError, TypeError, KeyError) as exc:
            raise UsageError(f"invalid spec: {exc}") from None
        if getattr(args, "seed", None) is not None:
            spec.seed = cfg.seed
        try:
            write_single(spec, cfg.out, args.id)
        except SynthSpecError as exc:
            raise UsageError(f"invalid spec: {exc}") from None
        return EXIT_OK
    effects = {}
    for e in args.effect or []:
        group, key, value = parse_effect(e)
        effects.setdefault(group, {})[key] = value
    try:
        generate_cohort(cfg.out, effects, args.n, cfg.seed)
    except (SynthSpecError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _globals(parser, suppress):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="key = value configuration file")
    parser.add_argument("--out", default=d, help="output file (analyze) or directory")
    parser.add_argument("--workers", type=int, default=d, help="worker processes for batch")
    parser.add_argument("--seed", type=int, default=d, help="random seed (synth)")
    parser.add_argument("--verbose", "-v", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser():
    parser = argparse.ArgumentParser(prog="vesselmorph", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="measure one image")
    _globals(p, suppress=True)
    p.add_argument("--artery")
    p.add_argument("--vein")
    p.add_argument("--disc")
    p.add_argument("--id")
    p.add_argument("--ser", type=float, default=0.0)
    p.add_argument("--manifest", help="take the record from a manifest (with --id)")
    p.add_argument("--gate", action="store_true", help="apply the quality gate first")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("batch", help="measure every image in a manifest")
    _globals(p, suppress=True)
    p.add_argument("manifest")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("stats", help="group tables from batch metrics")
    _globals(p, suppress=True)
    p.add_argument("metrics", help="metrics.csv or the batch output directory")
    p.add_argument("manifest")
    p.add_argument("--posthoc", choices=("lsd", "bonferroni"))
    p.add_argument("--unit", choices=("image", "subject"))
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("plot", help="bar charts from tables.json")
    _globals(p, suppress=True)
    p.add_argument("tables", help="tables.json or the stats output directory")
    p.add_argument("--all", action="store_true", help="plot all five parameters")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("synth", help="synthetic images or cohorts")
    _globals(p, suppress=True)
    p.add_argument("--spec", help="single-image spec JSON")
    p.add_argument("--id", default="synth")
    p.add_argument("--n", type=int, default=10, help="images per group (cohort mode)")
    p.add_argument("--effect", action="append", metavar="GROUP:SYSTEM.PARAM=OFFSET")
    p.set_defaults(func=cmd_synth)
    return parser


def resolve_config(args):
    cfg = load_config(args.config)
    overrides = {k: getattr(args, k, None) for k in ("out", "workers", "seed", "posthoc", "unit")}
    return cfg.replace(**overrides)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except (UsageError, ConfigError) as exc:
        _err(type(exc).__name__, str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
