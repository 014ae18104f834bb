"""molbench command line.

Exit codes: 0 success, 1 fatal error, 2 bad flags. Data goes to files (or
stdout when no output path is given); progress and diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import random
import sys
from typing import Sequence

from molbench import __version__
from molbench.chemio import parse_sdf, write_sdf
from molbench.stats import dumps

log = logging.getLogger("molbench")

DEFAULT_TABLE = {
    "legacy-arom1": "builtin:legacy",
    "arom15": "builtin:legacy",
    "arom-tuple": "builtin:tuple",
    "kekulized": "builtin:corrected",
}


class UsageError(Exception):
    """Incompatible flags detected after parsing (exit code 2)."""


def _load_config(path: str) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _read_records(paths: Sequence[str]) -> list:
    out = []
    for p in paths:
        out.extend(parse_sdf(p))
    return out


def _ordered(items: list, args) -> list:
    if getattr(args, "shuffle", False):
        items = list(items)
        random.Random(args.seed).shuffle(items)
    return items


def _meta(args, **extra) -> dict:
    meta = {
        "version": __version__,
        "seed": args.seed,
        "shuffled": bool(getattr(args, "shuffle", False)),
        "folds": getattr(args, "folds", None),
        "allow_short_fold": bool(getattr(args, "allow_short", False)),
    }
    meta.update(extra)
    return meta


# ---------------------------------------------------------------- commands

def cmd_curate(args) -> int:
    from molbench.curation import curate, filter_fragmented, regenerate_tables
    from molbench.kekulize import format_failure_log

    records = _read_records(args.input)
    curated, report = curate(records, workers=args.workers)
    write_sdf(curated, args.output)
    if args.failures:
        _write(args.failures, format_failure_log(report.failures))
    if args.tables_dir:
        kept, _, _ = filter_fragmented(records)
        tables = regenerate_tables(curated, kept)
        paths = tables.write(args.tables_dir)
        report.table_path = paths["total"]
        _write(os.path.join(args.tables_dir, "diff.json"), dumps(tables.diff_dict()))
    print(
        f"curate: {report.input} in, {report.removed_fragmented} fragmented, "
        f"{report.kekulize_failures} kekulization failures, {report.output} out",
        file=sys.stderr,
    )
    _write(args.report, dumps(report.as_dict()))
    return 0


def cmd_table(args) -> int:
    from molbench.valency.tables import build_valency_table, diff_tables, resolve_table

    if args.action == "build":
        table = build_valency_table(_read_records(args.input), args.key_mode)
        _write(args.output, table.dumps())
    elif args.action == "export":
        _write(args.output, resolve_table(args.table).dumps())
    else:
        table = resolve_table(args.table)
        ref = resolve_table(args.against)
        if table.key_mode != ref.key_mode:
            raise UsageError(f"cannot diff a {table.key_mode} table against a {ref.key_mode} table")
        _write(args.output, dumps(diff_tables(table, ref).as_dict()))
    return 0


def cmd_stability(args) -> int:
    from molbench.valency import StabilityMode, evaluate_stability, resolve_table

    mode = StabilityMode(args.mode)
    table = resolve_table(args.table or DEFAULT_TABLE[args.mode])
    if table.key_mode != mode.key_mode:
        raise UsageError(f"mode {mode.value} cannot use {table.key_mode}-keyed table {table.flavor}")
    mols = _ordered([r.molecule for r in _read_records(args.input)], args)
    rep = evaluate_stability(mols, mode, table, folds=args.folds, allow_short=args.allow_short)
    section = rep.as_dict()
    doc = {"stability": section, "metadata": _meta(args, stability_mode=mode.value,
                                                    table=table.flavor)}
    if args.rows:
        lines = ["name,n_atoms,n_stable,atom_fraction,all_stable,valid_and_connected"]
        lines += [f"{m.name},{m.n_atoms},{m.n_stable},{m.fraction!r},{int(m.all_stable)},"
                  f"{int(m.valid_connected)}" for m in rep.molecules]
        _write(args.rows, "\n".join(lines) + "\n")
    print(f"stability: MS {rep.molecule_stability.mean:.3f}, "
          f"atoms {rep.atom_stability.mean:.3f}, V&C {rep.valid_connected.mean:.3f}",
          file=sys.stderr)
    _write(args.output, dumps(doc))
    return 0


def cmd_geometry(args) -> int:
    from molbench.energy import geometry_section
    from molbench.geometry import (
        BACKEND,
        deviation_rows_csv,
        molecule_deviations,
        pair_from_sdf,
    )

    if args.from_dir:
        if args.initial or args.optimized:
            raise UsageError("--from-dir excludes --initial/--optimized")
        init_path = os.path.join(args.from_dir, "initial.sdf")
        opt_path = os.path.join(args.from_dir, "optimized.sdf")
    else:
        if not (args.initial and args.optimized):
            raise UsageError("give both --initial and --optimized, or --from-dir")
        init_path, opt_path = args.initial, args.optimized
    pairs = _ordered(pair_from_sdf(parse_sdf(init_path), parse_sdf(opt_path)), args)
    devs = [molecule_deviations(p) for p in pairs]
    section = geometry_section(devs, args.folds, args.pooling, args.allow_short)
    if args.csv:
        _write(args.csv, deviation_rows_csv(devs))
    if args.histograms:
        _write_histograms(args.histograms, pairs)
    _write(args.output, dumps({"geometry": section,
                               "metadata": _meta(args, pooling=args.pooling, kernel=BACKEND)}))
    return 0


def _write_histograms(directory: str, pairs) -> None:
    import numpy as np

    from molbench.geometry import histogram_csv
    from molbench.model import enumerate_angles
    from molbench import _geom_fallback as k

    os.makedirs(directory, exist_ok=True)
    lengths, angles = [], []
    for p in pairs:
        mol = p.initial
        pos = np.array(mol.positions, dtype=float).reshape(-1, 3)
        bonds = np.array([(b.i, b.j) for b in mol.bonds], dtype=np.int64).reshape(-1, 2)
        lengths.extend(k.bond_lengths(pos, bonds).tolist())
        a, deg = k.bond_angles(pos, np.array(enumerate_angles(mol), dtype=np.int64).reshape(-1, 3))
        angles.extend(a[deg == 0].tolist())
    _write(os.path.join(directory, "bond_lengths.csv"), histogram_csv(lengths, 60, (0.5, 3.5)))
    _write(os.path.join(directory, "bond_angles.csv"), histogram_csv(angles, 90, (0.0, 180.0)))


def _optimizer_from_args(args):
    from molbench.energy import parse_optimizer

    kw = {"timeout": args.timeout, "workdir": args.workdir, "keep_workdir": args.keep_workdir}
    if args.xtb_binary:
        kw["binary"] = args.xtb_binary
    return parse_optimizer(args.optimizer, **kw)


def cmd_energy(args) -> int:
    from molbench.chemio import SdfRecord
    from molbench.energy import energy_section, evaluate_energy_geometry, rows_csv

    try:
        spec = _optimizer_from_args(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    records = _read_records(args.input)
    mols = _ordered([r.molecule for r in records], args)
    batch = evaluate_energy_geometry(mols, spec, workers=args.workers)
    ff = None
    if args.ff_optimizer:
        ff_spec = _ff_optimizer_from_args(args)
        ff_batch = evaluate_energy_geometry(mols, ff_spec, workers=args.workers)
        ff = [r.delta_e for r in ff_batch.usable]
    section = energy_section(batch, folds=args.folds, allow_short=args.allow_short,
                             pooling=args.pooling, ff_delta_e=ff)
    doc = {"energy": section, "metadata": _meta(args, pooling=args.pooling)}
    out = args.output
    os.makedirs(out, exist_ok=True)
    write_sdf([SdfRecord(p.initial) for p in batch.pairs], os.path.join(out, "initial.sdf"))
    opt_records = []
    for row, pair in zip(batch.rows, batch.pairs):
        props = {"e_initial_kcal": repr(row.e_initial), "e_final_kcal": repr(row.e_final),
                 "delta_e_relax_kcal": repr(row.delta_e)}
        opt_records.append(SdfRecord(pair.optimized, props))
    write_sdf(opt_records, os.path.join(out, "optimized.sdf"))
    _write(os.path.join(out, "rows.csv"), rows_csv(batch.rows))
    _write(os.path.join(out, "failures.tsv"), "".join(f.line() + "\n" for f in batch.failures))
    _write(os.path.join(out, "commands.log"),
           "".join(f"{r.name}\t{c}\n" for r in batch.rows for c in r.commands))
    _write(os.path.join(out, "report.json"), dumps(doc))
    print(f"energy: {len(batch.rows)} optimized, {len(batch.failures)} failed, "
          f"{len(batch.rows) - len(batch.usable)} anomalous", file=sys.stderr)
    return 0


def _ff_optimizer_from_args(args):
    from molbench.energy import parse_optimizer

    return parse_optimizer(args.ff_optimizer, timeout=args.timeout, workdir=args.workdir)


def cmd_report(args) -> int:
    import json

    from molbench.stats import merge_reports

    parts = []
    for path in args.inputs:
        with open(path, encoding="utf-8") as fh:
            parts.append(json.load(fh))
    rep = merge_reports(parts)
    _write(args.output, rep.to_json())
    if args.text:
        _write(args.text, rep.to_text())
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for any shuffling (echoed in output)")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    common.add_argument("--config", help="TOML file with default flag values")
    common.add_argument("-v", "--verbose", action="store_true")

    folds = argparse.ArgumentParser(add_help=False)
    folds.add_argument("--folds", type=int, default=1, help="number of contiguous folds")
    folds.add_argument("--allow-short", action="store_true", help="allow a short last fold")
    folds.add_argument("--shuffle", action="store_true", help="shuffle input with --seed before folding")

    p = argparse.ArgumentParser(prog="molbench", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"molbench {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("curate", parents=[common], help="filter fragments and kekulize a dataset")
    c.add_argument("-i", "--input", action="append", required=True)
    c.add_argument("-o", "--output", required=True)
    c.add_argument("--report", help="JSON report path (default stdout)")
    c.add_argument("--failures", help="kekulization failure log path")
    c.add_argument("--tables-dir", help="write regenerated valency tables and diffs here")
    c.set_defaults(func=cmd_curate)

    t = sub.add_parser("table", parents=[common], help="build, export or diff valency tables")
    tsub = t.add_subparsers(dest="action", required=True)
    tb = tsub.add_parser("build", parents=[common])
    tb.add_argument("-i", "--input", action="append", required=True)
    tb.add_argument("--key-mode", choices=["total", "tuple"], default="tuple")
    tb.add_argument("-o", "--output")
    te = tsub.add_parser("export", parents=[common])
    te.add_argument("table", help="builtin:corrected|legacy|tuple or a table file")
    te.add_argument("-o", "--output")
    td = tsub.add_parser("diff", parents=[common])
    td.add_argument("table")
    td.add_argument("--against", default="builtin:corrected")
    td.add_argument("-o", "--output")
    t.set_defaults(func=cmd_table)

    s = sub.add_parser("stability", parents=[common, folds], help="atom/molecule stability and V&C")
    s.add_argument("-i", "--input", action="append", required=True)
    s.add_argument("--mode", choices=sorted(DEFAULT_TABLE), default="kekulized")
    s.add_argument("--table", help="builtin:<name> or table file (default follows --mode)")
    s.add_argument("-o", "--output")
    s.add_argument("--rows", help="per-molecule CSV path")
    s.set_defaults(func=cmd_stability)

    g = sub.add_parser("geometry", parents=[common, folds], help="bond/angle/torsion deviations")
    g.add_argument("--initial")
    g.add_argument("--optimized")
    g.add_argument("--from-dir", help="output directory of the energy command")
    g.add_argument("--pooling", choices=["pooled", "per-molecule"], default="pooled")
    g.add_argument("-o", "--output")
    g.add_argument("--csv", help="per-molecule deviation CSV path")
    g.add_argument("--histograms", help="directory for bond-length/angle histogram CSVs")
    g.set_defaults(func=cmd_geometry)

    e = sub.add_parser("energy", parents=[common, folds], help="relaxation energy + deviations")
    e.add_argument("-i", "--input", action="append", required=True)
    e.add_argument("--optimizer", default="xtb",
                   help="xtb | mock[:identity|:shift=F,k=K] | cmd:<template with {input} {charge}>")
    e.add_argument("--ff-optimizer", help="optional force-field optimizer (cmd:<template>) for the FF column")
    e.add_argument("--xtb-binary", help="xtb executable (MOLBENCH_XTB wins if set)")
    e.add_argument("--timeout", type=float, default=600.0)
    e.add_argument("--workdir", help="parent directory for per-molecule scratch dirs")
    e.add_argument("--keep-workdir", action="store_true")
    e.add_argument("--pooling", choices=["pooled", "per-molecule"], default="pooled")
    e.add_argument("-o", "--output", default="energy_out", help="output directory")
    e.set_defaults(func=cmd_energy)

    r = sub.add_parser("report", parents=[common], help="merge section JSON files")
    r.add_argument("inputs", nargs="+")
    r.add_argument("-o", "--output")
    r.add_argument("--text", help="also write a human-readable table here")
    r.set_defaults(func=cmd_report)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cfg = _load_config(known.config)
    flat = {k.replace("-", "_"): v for k, v in cfg.items() if not isinstance(v, dict)}
    _push_defaults(parser, flat, cfg)


def _push_defaults(parser: argparse.ArgumentParser, vals: dict, cfg: dict) -> None:
    # nested subparsers apply their own defaults last, so every level gets them
    parser.set_defaults(**vals)
    for action in parser._actions:
        if not isinstance(action, argparse._SubParsersAction):
            continue
        for name, sp in action.choices.items():
            merged = dict(vals)
            section = cfg.get(name)
            if isinstance(section, dict):
                merged.update({k.replace("-", "_"): v for k, v in section.items()
                               if not isinstance(v, dict)})
            _push_defaults(sp, merged, section if isinstance(section, dict) else {})


def run(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except (OSError, ValueError) as exc:
        print(f"molbench: error: bad config: {exc}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if getattr(args, "folds", 1) < 1 or args.workers < 1:
        print("molbench: error: --folds and --workers must be >= 1", file=sys.stderr)
        return 2
    print(f"molbench {args.command}: seed={args.seed}", file=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"molbench: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        if args.verbose:
            log.exception("fatal")
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"molbench: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
