"""Command line entry point: fetch, analyze, contrast, simulate.

Exit codes: 0 success, 1 configuration error, 2 ingestion failure,
3 analysis failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import CACHE_ENV, FIELD_HELP, ConfigError, RunConfig, load_config
from .ingest import LOCAL, FetchError, IngestError, IngestionReport, atomic_write, load_corpora
from .keyness import KeynessError, gender_contrast
from .pipeline import AnalysisResult, analyze
from .report import (ReportError, emit_plot_data, export_model_matrix, export_rows,
                     format_summary_table, write_plot_bundle)
from .synthetic import SyntheticSpec, generate_plays

EXIT_OK, EXIT_CONFIG, EXIT_INGEST, EXIT_ANALYSIS = 0, 1, 2, 3
FIXTURE_DIR = Path(__file__).parent / "data"

log = logging.getLogger("dramadist")


def _config_options(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("run configuration (flags override the config file)")
    g.add_argument("--config", help="TOML config file; keys as below, optionally under [dramadist]")
    g.add_argument("--fixture", action="store_true",
                   help="use the bundled fixture corpus (local TEI files) instead of DraCor")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        default = getattr(RunConfig(), f.name)
        doc = f"{FIELD_HELP[f.name]} (default: {default if not isinstance(default, tuple) else ' '.join(default)})"
        if f.type == "bool":
            g.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None, help=doc)
        elif f.name == "corpora":
            g.add_argument(flag, dest=f.name, nargs="+", default=None, metavar="ID", help=doc)
        elif f.name == "distance_form":
            g.add_argument(flag, dest=f.name, choices=("root", "squared"), default=None, help=doc)
        else:
            g.add_argument(flag, dest=f.name, default=None, help=doc)


def build_parser() -> argparse.ArgumentParser:
    epilog = "configuration keys:\n" + "\n".join(
        f"  {f.name:<14} {FIELD_HELP[f.name]}" for f in fields(RunConfig)
    ) + f"\n\nThe cache root may also be set with ${CACHE_ENV}; flags take precedence."
    parser = argparse.ArgumentParser(
        prog="dramadist",
        description="Character distinctiveness in drama corpora: 3-gram energy distance and keyness AUC.",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", help="download corpora into the cache")
    _config_options(p)

    p = sub.add_parser("analyze", help="compute distinctiveness rows, summaries, plot data")
    _config_options(p)

    p = sub.add_parser("contrast", help="pooled gender keyword tables per corpus")
    _config_options(p)
    p.add_argument("--genders", nargs=2, default=("female", "male"), metavar=("A", "B"))
    p.add_argument("--rows", type=int, default=40, help="words per side (default: 40)")

    p = sub.add_parser("simulate", help="run a synthetic play through the full pipeline")
    p.add_argument("spec", help="JSON file with a synthetic play specification")
    _config_options(p)
    return parser


def _load(args) -> RunConfig:
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)}
    if args.fixture:
        overrides["source"] = LOCAL
        overrides["corpus_dir"] = str(FIXTURE_DIR)
        overrides["corpora"] = overrides["corpora"] or ["fixture"]
    return load_config(args.config, overrides)


def _ingest(cfg: RunConfig, out_dir: Optional[Path] = None):
    report = IngestionReport()
    plays = load_corpora(cfg.descriptors(), cfg.cache_dir, report, cfg.workers)
    if out_dir is not None:
        report.write(out_dir / "ingestion_report.jsonl")
    if not plays:
        raise IngestError("no plays could be ingested")
    return plays, report


def _keywords_csv(result: AnalysisResult, top: int = 20) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["corpus_id", "play_id", "character_id", "rank", "word", "z"])
    for row in result.rows:
        prof = result.profiles[row.key]
        for i, word in enumerate(prof.top_words[:top]):
            w.writerow([*row.key, i + 1, word, format(prof.top_curve[i], ".6g")])
    return buf.getvalue()


def write_analysis(result: AnalysisResult, cfg: RunConfig, out_dir: Path, meta: dict) -> list[Path]:
    written = [
        export_rows(result.rows, out_dir / "characters.csv", "csv", metadata=meta),
        export_rows(result.rows, out_dir / "characters.jsonl", "jsonl", metadata=meta),
    ]
    atomic_write(out_dir / "keywords.csv", _keywords_csv(result))
    atomic_write(out_dir / "summary.txt", format_summary_table(result.summaries))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["corpus_id", "total_characters", "characters_analysed", "unique_3grams",
                "unique_words", "total_3grams", "total_words"])
    for s in result.summaries:
        w.writerow([s.corpus_id, s.total_characters, s.characters_analysed, s.unique_3grams,
                    s.unique_words, s.total_3grams, s.total_words])
    atomic_write(out_dir / "summary.csv", buf.getvalue())
    written += [out_dir / "keywords.csv", out_dir / "summary.txt", out_dir / "summary.csv"]
    if cfg.plots:
        written.append(write_plot_bundle(emit_plot_data(result.rows), out_dir / "plots", meta))
    if cfg.model_matrix:
        dropped = export_model_matrix(result.rows, out_dir / "model_matrix.csv")
        if dropped:
            result.warnings.append(f"model matrix: dropped {dropped} rows with D = 0")
        written.append(out_dir / "model_matrix.csv")
    atomic_write(out_dir / "warnings.txt", "".join(w + "\n" for w in result.warnings))
    return written


def cmd_fetch(cfg: RunConfig) -> dict:
    out = Path(cfg.output_dir)
    plays, report = _ingest(cfg, out)
    counts = {}
    for p in plays:
        counts[p.corpus_id] = counts.get(p.corpus_id, 0) + 1
    summary = {"plays": counts, "total_plays": len(plays),
               "errors": report.count("error"), "warnings": report.count("warning")}
    print(json.dumps(summary, sort_keys=True))
    return summary


def cmd_analyze(cfg: RunConfig) -> AnalysisResult:
    out = Path(cfg.output_dir)
    plays, _ = _ingest(cfg, out)
    result = analyze(plays, cfg.settings(), workers=cfg.workers,
                     progress=lambda p: log.info("analysed %s/%s", p.corpus_id, p.play_id))
    write_analysis(result, cfg, out, cfg.metadata())
    sys.stdout.write(format_summary_table(result.summaries))
    return result


def cmd_contrast(cfg: RunConfig, genders: Sequence[str] = ("female", "male"), rows: int = 40) -> list:
    out = Path(cfg.output_dir)
    plays, _ = _ingest(cfg, out)
    tables = []
    for corpus in sorted({p.corpus_id for p in plays}):
        table = gender_contrast([p for p in plays if p.corpus_id == corpus], genders[0], genders[1],
                                cfg.alpha0, rows)
        stem = f"contrast_{corpus}_{genders[0]}_{genders[1]}"
        atomic_write(out / f"{stem}.csv", table.to_csv())
        atomic_write(out / f"{stem}.txt", table.to_text())
        sys.stdout.write(table.to_text() + "\n")
        tables.append(table)
    return tables


def monotonicity_report(spec: SyntheticSpec, result: AnalysisResult) -> dict:
    from scipy.stats import spearmanr

    by_char = {r.character_id: r for r in result.rows}
    eps, d, auc = [], [], []
    for k, e in enumerate(spec.mixing):
        row = by_char.get(f"c{k:02d}")
        if row is not None:
            eps.append(e)
            d.append(row.distinctiveness)
            auc.append(row.keyness_auc)
    rho_d = float(spearmanr(eps, d)[0]) if len(eps) > 2 else float("nan")
    rho_auc = float(spearmanr(eps, auc)[0]) if len(eps) > 2 else float("nan")
    return {"characters": [{"mixing": e, "distinctiveness": x, "keyness_auc": y}
                           for e, x, y in zip(eps, d, auc)],
            "spearman_mixing_distinctiveness": rho_d,
            "spearman_mixing_keyness_auc": rho_auc}


def cmd_simulate(cfg: RunConfig, spec_path: str) -> dict:
    try:
        spec = SyntheticSpec.load(spec_path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError([f"synthetic spec {spec_path}: {exc}"]) from None
    problems = spec.validate()
    if problems:
        raise ConfigError([f"synthetic spec: {p}" for p in problems])
    result = analyze(generate_plays(spec), cfg.settings(), workers=cfg.workers)
    out = Path(cfg.output_dir)
    meta = {**cfg.metadata(), "synthetic_spec": spec.to_dict()}
    write_analysis(result, cfg, out, meta)
    rep = monotonicity_report(spec, result)
    atomic_write(out / "monotonicity.json", json.dumps(rep, indent=1, sort_keys=True) + "\n")
    lines = [f"{'mixing':>8} {'D':>10} {'keyness_auc':>12}"]
    lines += [f"{c['mixing']:>8.3f} {c['distinctiveness']:>10.5f} {c['keyness_auc']:>12.3f}"
              for c in rep["characters"]]
    lines.append(f"spearman(mixing, D)           = {rep['spearman_mixing_distinctiveness']:.3f}")
    lines.append(f"spearman(mixing, keyness_auc) = {rep['spearman_mixing_keyness_auc']:.3f}")
    print("\n".join(lines))
    return rep


def _fail(code: int, kind: str, messages: Sequence[str]) -> int:
    sys.stderr.write(json.dumps({"error": kind, "exit_code": code, "messages": list(messages)},
                                ensure_ascii=False) + "\n")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _load(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc.problems)
    try:
        if args.command == "fetch":
            cmd_fetch(cfg)
        elif args.command == "analyze":
            cmd_analyze(cfg)
        elif args.command == "contrast":
            cmd_contrast(cfg, args.genders, args.rows)
        elif args.command == "simulate":
            cmd_simulate(cfg, args.spec)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc.problems)
    except (FetchError, IngestError) as exc:
        return _fail(EXIT_INGEST, "ingestion", [str(exc)])
    except (ReportError, KeynessError, ValueError) as exc:
        return _fail(EXIT_ANALYSIS, "analysis", [str(exc)])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
