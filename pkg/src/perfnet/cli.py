"""Command line entry point: ``perfnet {clean,search,baseline,describe,report}``.

Exit codes: 0 success, 2 input/output problem (including refusing to
overwrite without ``--force``), 3 invalid configuration or data schema,
4 every experiment failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import data, harness, results
from .arch import build_stack, describe_stack, spec_from_dict
from .errors import ConfigError

EXIT_OK = 0
EXIT_IO = 2
EXIT_CONFIG = 3
EXIT_ALL_FAILED = 4

log = logging.getLogger("perfnet")


class CliIOError(Exception):
    pass


def _note(message):
    print(message, file=sys.stderr, flush=True)


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliIOError(f"cannot create output directory {out}: {exc}") from None
    return out


def _guard(paths, force):
    existing = [str(p) for p in paths if Path(p).exists()]
    if existing and not force:
        raise CliIOError(f"refusing to overwrite {', '.join(existing)} (pass --force)")


def load_document(path) -> dict:
    """Read a YAML or JSON document."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliIOError(f"cannot read {path}: {exc}") from None
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from None


def load_dataset(path) -> data.CleanDataset:
    path = Path(path)
    if not path.is_file():
        raise CliIOError(f"cannot read {path}: no such file")
    vocab = path.with_name("vocabularies.json")
    return data.read_clean_csv(path, vocab if vocab.is_file() else None)


# --------------------------------------------------------------------------
# commands


def cmd_clean(args) -> int:
    src = Path(args.input)
    if not src.is_file():
        raise CliIOError(f"cannot read {src}: no such file")
    out = _out_dir(args.out)
    targets = [out / "cleaned.csv", out / "report.yaml", out / "vocabularies.json"]
    _guard(targets, args.force)
    try:
        raw = data.read_raw_csv(src)
    except (OSError, UnicodeDecodeError) as exc:
        raise CliIOError(f"cannot read {src}: {exc}") from None
    ds, report = data.clean_table(raw)
    data.write_clean_csv(ds, targets[0])
    targets[1].write_text(report.to_yaml(), encoding="utf-8")
    data.write_vocabularies(ds, targets[2])
    _note(f"clean: {report.rows_in} rows in, {report.rows_out} rows out, {ds.n_features} features")
    return EXIT_OK


def cmd_search(args) -> int:
    dataset = load_dataset(args.input)
    doc = load_document(args.grid)
    if isinstance(doc, dict) and args.standardize:
        doc = {**doc, "standardize": True}
    configs, exclusions = harness.enumerate_grid(doc, args.seed, dataset.n_features)
    for ex in exclusions:
        _note(f"excluded: {ex.description}: {ex.reason}")
    if not configs:
        raise ConfigError("grid: no feasible configuration left after exclusions")
    out = _out_dir(args.out)
    trace_dir = out / "traces"
    _guard([out / "results_by_r2.csv", out / "results_by_mse.csv", trace_dir], args.force)
    trace_dir.mkdir(exist_ok=True)

    total = len(configs)

    def progress(i, rec):
        m = rec.mean
        _note(
            f"search: [{i + 1}/{total}] {rec.identity} r2={m.r2:.6g} mse={m.mse:.6g} "
            f"({len(rec.per_seed)}/{rec.n_seeds_expected} seeds)"
        )

    records = harness.run_many(configs, dataset, args.workers, progress)
    index_rows = []
    for i, rec in enumerate(records):
        name = f"trace_{i:03d}"
        results.export_epoch_trace(rec, trace_dir / f"{name}.csv")
        index_rows.append(f"{name},{rec.identity},{len(rec.per_seed)}")
    (trace_dir / "index.csv").write_text(
        "trace,identity,completed_seeds\n" + "".join(r + "\n" for r in index_rows), encoding="utf-8"
    )
    results.write_results(out, records, args.timing)

    completed = [r for r in records if r.per_seed]
    if completed:
        best = results.rank_results(completed)[0][0]
        qq_path, _ = results.export_residual_diagnostics(best.residual_vector(), out, "top")
        if args.svg:
            from . import plotting

            cols = results.read_numeric_csv(qq_path)
            plotting.plot_qq(cols["theoretical"], cols["sample"], out / "qq_top.svg", best.identity)
            trace_file = trace_dir / f"trace_{records.index(best):03d}.csv"
            plotting.plot_epoch_trace(results.read_numeric_csv(trace_file), out / "trace_top.svg", best.identity)
    failed = sum(1 for r in records if r.errors)
    _note(f"search: {len(records)} configurations, {failed} with aborted seeds, {len(exclusions)} excluded")
    return EXIT_OK if completed else EXIT_ALL_FAILED


def cmd_baseline(args) -> int:
    dataset = load_dataset(args.input)
    out = _out_dir(args.out)
    kinds = results.BASELINE_KINDS
    diag = [out / f"{p}_{k}.csv" for k in kinds for p in ("qq", "residuals")]
    _guard(diag, args.force)
    existing = []
    table = out / "results_by_r2.csv"
    if table.exists():
        existing = results.read_results(table)
        if any(results.is_baseline(r) for r in existing):
            if not args.force:
                raise CliIOError(f"{table} already holds baseline rows (pass --force to replace)")
            existing = [r for r in existing if not results.is_baseline(r)]
    seeds = harness.derive_seeds(args.seed)
    records = []
    for kind in kinds:
        rec = harness.run_baseline(kind, dataset, seeds, args.standardize)
        results.export_residual_diagnostics(rec.residual_vector(), out, kind)
        records.append(rec)
        _note(f"baseline: {kind} r2={rec.mean.r2:.6g} mse={rec.mean.mse:.6g}")
    results.write_results(out, existing + records, args.timing)
    if args.svg:
        render_figures(out, out)
    return EXIT_OK


def cmd_describe(args) -> int:
    doc = load_document(args.input)
    spec = spec_from_dict(doc)
    stack = build_stack(spec, args.features)
    print(f"{stack.arch_id} on {args.features} features")
    for line in describe_stack(stack):
        print(line)
    return EXIT_OK


def cmd_report(args) -> int:
    src = Path(args.input)
    table = src / "results_by_r2.csv" if src.is_dir() else src
    if not table.is_file():
        raise CliIOError(f"cannot read {table}: no such file")
    records = results.read_results(table)
    out = _out_dir(args.out)
    _guard([out / "results_by_r2.csv", out / "results_by_mse.csv"], args.force or out == table.parent)
    results.write_results(out, records, args.timing)
    by_r2, _ = results.rank_results(records)
    for rec in by_r2:
        m = rec.mean
        print(f"{rec.identity} r2={m.r2:.6g} mae={m.mae:.6g} mse={m.mse:.6g}")
    if args.svg:
        render_figures(table.parent, out)
    return EXIT_OK


def render_figures(src_dir, out_dir):
    """SVGs for every Q-Q, residual and trace CSV found in ``src_dir``."""
    from . import plotting

    src_dir, out_dir = Path(src_dir), Path(out_dir)
    for qq in sorted(src_dir.glob("qq_*.csv")):
        cols = results.read_numeric_csv(qq)
        plotting.plot_qq(cols["theoretical"], cols["sample"], out_dir / f"{qq.stem}.svg", qq.stem[3:])
    boxes = {p.stem[len("residuals_"):]: results.read_numeric_csv(p)["abs_residual"]
             for p in sorted(src_dir.glob("residuals_*.csv"))}
    if boxes:
        plotting.plot_residual_boxes(boxes, out_dir / "residuals_by_method.svg")
    for trace in sorted((src_dir / "traces").glob("trace_*.csv")):
        plotting.plot_epoch_trace(results.read_numeric_csv(trace), out_dir / f"{trace.stem}.svg", trace.stem)


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perfnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--input", required=True, help="input file")
        if out:
            p.add_argument("--out", required=True, help="output directory (created if absent)")
            p.add_argument("--force", action="store_true", help="overwrite existing outputs")

    p = sub.add_parser("clean", help="clean a raw results table")
    common(p)
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("search", help="train every configuration of a grid document")
    common(p)
    p.add_argument("--grid", required=True, help="grid document (YAML or JSON)")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.add_argument("--standardize", action="store_true", help="standardize features on the train split")
    p.add_argument("--svg", action="store_true", help="also render SVG figures")
    p.add_argument("--timing", action="store_true", help="fill the seconds column (not reproducible)")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("baseline", help="fit LR, RF and SVR on the seeded splits")
    common(p)
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--standardize", action="store_true", help="standardize features on the train split")
    p.add_argument("--svg", action="store_true", help="also render SVG figures")
    p.add_argument("--timing", action="store_true", help="fill the seconds column (not reproducible)")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("describe", help="print the layer shapes of an architecture document")
    common(p, out=False)
    p.add_argument("--features", type=int, default=24, help="number of input features")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("report", help="re-rank an existing results table")
    common(p)
    p.add_argument("--svg", action="store_true", help="render SVG figures from exported CSVs")
    p.add_argument("--timing", action="store_true", help="keep the seconds column")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr, format="%(levelname)s: %(message)s")
    if getattr(args, "workers", 1) < 1:
        _note("error: --workers must be at least 1")
        return EXIT_CONFIG
    try:
        return args.func(args)
    except CliIOError as exc:
        _note(f"error: {exc}")
        return EXIT_IO
    except ConfigError as exc:
        _note(f"error: {exc}")
        return EXIT_CONFIG
    except OSError as exc:
        _note(f"error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
