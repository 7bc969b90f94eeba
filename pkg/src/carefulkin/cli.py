"""``carefulkin`` command-line interface.

Subcommands share one flag set; a ``--config`` JSON file sets the base
values and explicit flags win. Exit status is 0 on success, 2 on a
configuration or missing-input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import ARCHITECTURES, EXCLUSION_MODES, LAYOUTS, SOURCES, SUBSETS, TASKS, PipelineConfig
from .errors import ParameterError
from .experiment import (
    CvReport,
    Layout,
    Subset,
    Task,
    assemble,
    balance_classes,
    generate_synthetic_trials,
    loso_cross_validate,
    outlier_subject_report,
    read_dataset,
    subset_analysis,
    write_dataset,
)
from .experiment.dataset import PADDED_FRAMES
from .features import FEATURE_NAMES, Source
from .flow import raw_descriptors, read_frames, write_flow_csv
from .ingest import ManifestEntry, load_trial, read_manifest, write_manifest, write_trial_csv
from .pipeline import preprocess_trial


class UsageError(Exception):
    """Bad configuration or missing input; maps to exit status 2."""


# ---------------------------------------------------------------- configuration


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--manifest", help="manifest path (default <out>/manifest.json)")
    common.add_argument("--source", choices=SOURCES)
    common.add_argument("--task", choices=TASKS)
    common.add_argument("--layout", choices=LAYOUTS)
    common.add_argument("--arch", choices=ARCHITECTURES)
    common.add_argument("--subset", choices=SUBSETS)
    common.add_argument("--exclude-outliers", choices=EXCLUSION_MODES)
    common.add_argument("--exclude-subjects", help="comma-separated ids, used with --exclude-outliers list")
    common.add_argument("--subjects", type=int, help="synthetic cohort size")
    common.add_argument("--trials", type=int, help="synthetic trials per subject")
    common.add_argument("--max-epochs", type=int)
    common.add_argument("--format", choices=("text", "csv"), default="text")

    parser = argparse.ArgumentParser(prog="carefulkin", description="Classify carefulness and weight from transport-movement kinematics.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write a synthetic cohort and its manifest")
    sub.add_parser("preprocess", parents=[common], help="segment, extract features, build datasets")
    sub.add_parser("train-eval", parents=[common], help="leave-one-subject-out training and evaluation")
    sub.add_parser("report", parents=[common], help="summarise reports and duration statistics")
    return parser


def resolve_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.out is not None:
        cfg.paths = replace(cfg.paths, out=args.out)
    if args.manifest is not None:
        cfg.paths = replace(cfg.paths, manifest=args.manifest)
    if args.seed is not None:
        cfg.seed = args.seed
    for flag, attr in (("source", "source"), ("task", "task"), ("subset", "subset")):
        value = getattr(args, flag)
        if value is not None:
            setattr(cfg, attr, value)
    if args.arch is not None:
        cfg.model = replace(cfg.model, architecture=args.arch)
    if args.layout is not None:
        cfg.model = replace(cfg.model, layout=args.layout)
    if args.exclude_outliers is not None:
        cfg.dataset = replace(cfg.dataset, exclude_outliers=args.exclude_outliers)
    if args.exclude_subjects is not None:
        try:
            ids = [int(s) for s in args.exclude_subjects.split(",") if s.strip()]
        except ValueError:
            raise ParameterError(f"--exclude-subjects expects comma-separated integers, got {args.exclude_subjects!r}") from None
        cfg.dataset = replace(cfg.dataset, exclude_subjects=ids)
    if args.subjects is not None:
        cfg.synth = replace(cfg.synth, n_subjects=args.subjects)
    if args.trials is not None:
        cfg.synth = replace(cfg.synth, trials_per_subject=args.trials)
    if args.max_epochs is not None:
        cfg.train = replace(cfg.train, max_epochs=args.max_epochs)
    return cfg.validate()


def _write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- synth


def cmd_synth(cfg: PipelineConfig, fmt: str) -> int:
    synth_cfg = cfg.synth_config()
    trials = generate_synthetic_trials(synth_cfg)
    manifest_path = cfg.manifest_path
    root = manifest_path.parent
    trial_dir = root / "trials"
    trial_dir.mkdir(parents=True, exist_ok=True)
    entries, truth = [], {}
    for rec in trials:
        name = rec.trial_id
        write_trial_csv(rec.tracks, trial_dir / f"{name}.csv")
        write_flow_csv(rec.flow_descriptors, trial_dir / f"{name}_flow.csv")
        entries.append(
            ManifestEntry(
                path=f"trials/{name}.csv",
                subject_id=rec.subject_id,
                trial_index=rec.trial_index,
                glass_code=rec.glass_code,
                route=rec.route.value,
                shelf_slot=rec.shelf_slot,
                flow_path=f"{name}_flow.csv",
                frame_rate=synth_cfg.camera_rate,
            )
        )
        truth[name] = rec.truth
    write_manifest(entries, manifest_path)
    _write_json(root / "truth.json", truth)
    print(f"wrote {len(entries)} trials ({synth_cfg.n_subjects} subjects x {synth_cfg.trials_per_subject}) and {manifest_path}")
    return 0


# ---------------------------------------------------------------- preprocess


SEGMENT_COLUMNS = (
    "trial_id", "subject", "glass", "status", "reach_start", "reach_end", "transport_start",
    "transport_end", "depart_start", "depart_end", "threshold", "duration", "frames", "message",
)


def _segment_row(entry, status, feats=None, message=""):
    row = {"trial_id": f"s{entry.subject_id:02d}_t{entry.trial_index:03d}", "subject": entry.subject_id,
           "glass": entry.glass_code, "status": status, "message": message}
    if feats is not None:
        seg = feats.segmentation
        row.update(
            reach_start=seg.reach[0], reach_end=seg.reach[1], transport_start=seg.transport[0],
            transport_end=seg.transport[1], depart_start=seg.depart[0], depart_end=seg.depart[1],
            threshold=f"{seg.threshold_value:.6g}", duration=f"{feats.duration:.6f}", frames=feats.features.frames,
        )
        if feats.warnings:
            row["message"] = "; ".join(filter(None, [message, *feats.warnings]))
    return row


def _write_features(feats, path: Path):
    with open(path, "w") as f:
        f.write("frame," + ",".join(FEATURE_NAMES) + "\n")
        for i, row in enumerate(feats.features.data[:, :4]):
            f.write(f"{i}," + ",".join(f"{v:.10g}" for v in row) + "\n")


def _load_record(entry: ManifestEntry, root: Path, source: Source, cfg: PipelineConfig):
    rec = load_trial(root / entry.path, entry)
    if source is Source.OpticalFlow and rec.flow_descriptors is None and entry.frames_dir:
        frames = read_frames(root / entry.frames_dir, entry.frame_rate or cfg.synth.camera_rate)
        rec.flow_descriptors = raw_descriptors(frames, cfg.preprocess.flow)
    return rec


def cmd_preprocess(cfg: PipelineConfig, fmt: str) -> int:
    manifest_path = cfg.manifest_path
    if not manifest_path.exists():
        raise UsageError(f"manifest not found: {manifest_path}")
    try:
        entries = read_manifest(manifest_path)
    except (ValueError, TypeError) as err:
        raise UsageError(f"unreadable manifest {manifest_path}: {err}") from None
    root = manifest_path.parent
    out = cfg.out_dir
    source = Source(cfg.source)
    feat_dir = out / "features" / source.value
    feat_dir.mkdir(parents=True, exist_ok=True)

    ok, rows = [], []
    for entry in entries:
        try:
            rec = _load_record(entry, root, source, cfg)
            feats = preprocess_trial(rec, source, cfg.preprocess)
        except (ValueError, OSError) as err:
            # one bad trial never stops the run
            rows.append(_segment_row(entry, "failed", message=f"{type(err).__name__}: {err}"))
            continue
        _write_features(feats, feat_dir / f"{feats.trial_id}.csv")
        if feats.features.frames > PADDED_FRAMES:
            rows.append(_segment_row(entry, "excluded", feats, f"transport longer than {PADDED_FRAMES} frames"))
            continue
        rows.append(_segment_row(entry, "ok", feats))
        ok.append(feats)

    with open(out / f"segmentation_{source.value}.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=SEGMENT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)

    n_failed = sum(r["status"] != "ok" for r in rows)
    summary = {
        "source": source.value,
        "n_trials": len(entries),
        "n_segmented": len(ok),
        "n_excluded_trials": n_failed,
        "exclusion_rate": n_failed / len(entries) if entries else 0.0,
        "failed_trials": [r["trial_id"] for r in rows if r["status"] != "ok"],
    }

    excluded = []
    try:
        outliers = outlier_subject_report(ok, cfg.dataset.outlier_factor)
        outlier_dict = outliers.to_dict()
    except ValueError as err:
        outliers, outlier_dict = None, {"error": str(err)}
    mode = cfg.dataset.exclude_outliers
    if mode == "auto" and outliers is not None:
        excluded = list(outliers.flagged)
    elif mode == "list":
        excluded = sorted(set(int(s) for s in cfg.dataset.exclude_subjects))
    outlier_dict["mode"] = mode
    outlier_dict["excluded"] = excluded
    _write_json(out / f"outliers_{source.value}.json", outlier_dict)

    kept = [t for t in ok if t.subject_id not in excluded]
    if not kept:
        raise UsageError("no usable trials remain after segmentation and exclusion")
    balanced = balance_classes(kept, cfg.dataset.class_cap, cfg.seed)
    ds_dir = out / "datasets"
    ds_dir.mkdir(parents=True, exist_ok=True)
    datasets = {}
    for layout in Layout:
        ds = assemble(balanced, layout, source)
        path = ds_dir / f"{source.value}_{layout.value}.ckd"
        write_dataset(ds, path)
        datasets[layout.value] = {"path": str(path.relative_to(out)), "shape": list(ds.shape)}
    summary.update(
        excluded_subjects=excluded,
        n_balanced=len(balanced),
        class_counts=ds.class_counts(),
        datasets=datasets,
    )
    _write_json(out / f"preprocess_{source.value}.json", summary)
    print(
        f"{source.value}: segmented {len(ok)}/{len(entries)} trials "
        f"(exclusion rate {100 * summary['exclusion_rate']:.2f}%), "
        f"excluded subjects {excluded or 'none'}, balanced to {len(balanced)}"
    )
    for r in rows:
        if r["status"] != "ok":
            print(f"  {r['trial_id']}: {r['status']} {r['message']}")
    return 0


# ---------------------------------------------------------------- train-eval


def report_name(cfg: PipelineConfig) -> str:
    name = f"{cfg.task}_{cfg.source}_{cfg.model.architecture}_{cfg.layout}"
    return name if cfg.subset == "none" else f"{name}_{cfg.subset}"


def cmd_train_eval(cfg: PipelineConfig, fmt: str) -> int:
    out = cfg.out_dir
    ds_path = out / "datasets" / f"{cfg.source}_{cfg.layout}.ckd"
    if not ds_path.exists():
        raise UsageError(f"dataset not found: {ds_path} (run preprocess --source {cfg.source} first)")
    ds = read_dataset(ds_path)
    if cfg.subset != "none" and cfg.task != "weight":
        raise ParameterError("subset analyses apply to the weight task only")
    spec = cfg.model_spec()
    name = report_name(cfg)
    kw = dict(
        normalize=cfg.dataset.normalize,
        ddof=cfg.aggregate_ddof,
        checkpoint_dir=out / "checkpoints" / name,
    )
    if cfg.subset == "none":
        report = loso_cross_validate(ds, spec, cfg.train_config(), Task(cfg.task), **kw)
    else:
        report = subset_analysis(ds, Subset(cfg.subset), spec, cfg.train_config(), **kw)
    report.meta.update(seed=cfg.seed, subset=cfg.subset, task=cfg.task)
    summary_path = out / f"preprocess_{cfg.source}.json"
    if summary_path.exists():
        report.meta["excluded_subjects"] = json.loads(summary_path.read_text()).get("excluded_subjects", [])
    path = out / "reports" / f"{name}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    report.write(path)
    agg = report.aggregate()
    print(
        f"{name}: {agg['n_folds']} folds, test {100 * agg['test_mean']:.2f} +/- {100 * agg['test_std']:.2f}%, "
        f"train {100 * agg['train_mean']:.2f} +/- {100 * agg['train_std']:.2f}% -> {path}"
    )
    return 0


# ---------------------------------------------------------------- report


def _pct(mean, std):
    return f"{100 * mean:5.1f} ± {100 * std:4.1f}"


def load_reports(out: Path) -> list[dict]:
    paths = sorted((out / "reports").glob("*.json"))
    reports = []
    for p in paths:
        d = json.loads(p.read_text())
        meta = d.get("meta", {})
        reports.append(
            {
                "name": p.stem,
                "task": d["task"],
                "source": meta.get("source", "?"),
                "architecture": meta.get("architecture", "?"),
                "layout": meta.get("layout", "?"),
                "subset": meta.get("subset", "none"),
                **CvReport.from_dict(d).aggregate(),
            }
        )
    return reports


def render_text(reports, outliers) -> str:
    buf = io.StringIO()
    w = buf.write
    w("LOSO accuracy, mean ± std over folds (%)\n\n")
    full = [r for r in reports if r["subset"] == "none"]
    for arch in sorted({r["architecture"] for r in full}):
        cells = {(r["task"], r["source"]): r for r in full if r["architecture"] == arch}
        w(f"{arch:<16}" + "".join(f"{s:>16}" for s in SOURCES) + "\n")
        for task in TASKS:
            line = f"{task:<16}"
            for source in SOURCES:
                r = cells.get((task, source))
                line += f"{_pct(r['test_mean'], r['test_std']) if r else '-':>16}"
            w(line + "\n")
        w("\n")
    w(f"{'report':<52}{'folds':>6}{'train':>16}{'test':>16}\n")
    for r in reports:
        w(f"{r['name']:<52}{r['n_folds']:>6}{_pct(r['train_mean'], r['train_std']):>16}{_pct(r['test_mean'], r['test_std']):>16}\n")
    for source, o in outliers.items():
        w(f"\nLow-care transport durations ({source})\n")
        if "error" in o:
            w(f"  unavailable: {o['error']}\n")
            continue
        kw = o["kruskal_wallis"]
        w(f"  Kruskal-Wallis chi2({kw['df']}, N={kw['N']}) = {kw['H']:.1f}, p = {kw['p']:.3g}\n")
        w(f"  {'subject':>7}{'median':>9}{'MAD':>8}{'others':>9}{'flag':>6}\n")
        for s, v in sorted(o["subjects"].items(), key=lambda kv: int(kv[0])):
            flag = "*" if v["flagged"] else ""
            w(f"  {int(s):>7}{v['median']:>9.3f}{v['mad']:>8.3f}{v['rest_median']:>9.3f}{flag:>6}\n")
        w(f"  flagged: {o['flagged'] or 'none'}; excluded ({o['mode']}): {o['excluded'] or 'none'}\n")
    return buf.getvalue()


def render_csv(reports, outliers) -> tuple[str, str]:
    acc = io.StringIO()
    cols = ["name", "task", "source", "architecture", "layout", "subset", "n_folds", "train_mean", "train_std", "test_mean", "test_std"]
    writer = csv.DictWriter(acc, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    writer.writerows(reports)
    dur = io.StringIO()
    dur.write("source,subject,median,mad,rest_median,rest_mad,flagged\n")
    for source, o in outliers.items():
        for s, v in sorted(o.get("subjects", {}).items(), key=lambda kv: int(kv[0])):
            dur.write(f"{source},{s},{v['median']:.6f},{v['mad']:.6f},{v['rest_median']:.6f},{v['rest_mad']:.6f},{int(v['flagged'])}\n")
    return acc.getvalue(), dur.getvalue()


def cmd_report(cfg: PipelineConfig, fmt: str) -> int:
    out = cfg.out_dir
    reports = load_reports(out)
    outliers = {s: json.loads(p.read_text()) for s in SOURCES if (p := out / f"outliers_{s}.json").exists()}
    if not reports and not outliers:
        raise UsageError(f"nothing to report under {out}; run train-eval first")
    if fmt == "csv":
        acc, dur = render_csv(reports, outliers)
        (out / "report.csv").write_text(acc)
        (out / "durations.csv").write_text(dur)
        sys.stdout.write(acc)
    else:
        text = render_text(reports, outliers)
        (out / "report.txt").write_text(text)
        sys.stdout.write(text)
    return 0


COMMANDS = {"synth": cmd_synth, "preprocess": cmd_preprocess, "train-eval": cmd_train_eval, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args.format)
    except (UsageError, ParameterError) as err:
        print(f"carefulkin {args.command}: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
