"""Command-line entry point: ``selattn trials|evolve|agent``.

Exit status: 0 on success, 1 on usage or configuration errors, 2 when a
frequency audit falls outside its tolerance bands.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from . import analysis, evolution, trials
from .genome import decode, load_genome, save_genome
from .world import mirror_trial_array, run_trial, trace_header, write_trace_csv

EXIT_OK, EXIT_USAGE, EXIT_AUDIT = 0, 1, 2
OUTPUT_ENV = "SELATTN_OUTPUT_DIR"
VARIANT_FLAGS = {"standard": "standard", "unseen-passing": "unseen_passing_augmented"}

log = logging.getLogger("selattn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or ".")


def _out_path(given: Optional[str], default_name: str) -> Path:
    p = Path(given) if given else output_dir() / default_name
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _deep_merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if k not in out:
            raise UsageError(f"unknown config key {k!r}")
        out[k] = _deep_merge(out[k], v) if isinstance(v, dict) and isinstance(out[k], dict) else v
    return out


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc
    except ValueError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc


def _trial_config(path: Optional[str]) -> trials.TrialConfig:
    if not path:
        return trials.TrialConfig()
    try:
        return trials.TrialConfig.from_dict(_deep_merge(trials.TrialConfig().to_dict(), _load_json(path)))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad trial config: {exc}") from exc


# ---------------------------------------------------------------------------
# trials


def cmd_trials_gen(args) -> int:
    if args.count <= 0:
        raise UsageError("--count must be positive")
    cfg = _trial_config(args.config)
    corpus = trials.generate_corpus(args.count, args.seed, cfg)
    out = _out_path(args.out, "corpus.jsonl")
    trials.write_corpus(out, corpus)
    print(f"wrote {len(corpus)} trials to {out}")
    audit = analysis.frequency_audit(trials.classify_many(corpus.trials, cfg))
    print(analysis.format_audit(audit))
    return EXIT_OK


def cmd_trials_classify(args) -> int:
    try:
        corpus = trials.read_corpus(args.input)
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc.strerror}") from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    cfg = _trial_config(args.config) if args.config else trials.TrialConfig.from_dict(
        corpus.header.get("generator", trials.TrialConfig().to_dict()))
    labels = trials.classify_many(corpus.trials, cfg)
    out = _out_path(args.out, "labels.jsonl")
    trials.write_labels(out, corpus, labels, cfg)
    audit = analysis.frequency_audit(labels)
    meta = {"corpus": str(args.input), "classifier": cfg.to_dict(), "seed": corpus.header.get("seed")}
    analysis.write_jsonl(_out_path(args.audit_out, "audit.jsonl"), analysis.audit_records(audit, meta))
    print(f"wrote labels for {len(corpus)} trials to {out}")
    print(analysis.format_audit(audit))
    if not audit.passed and not args.no_gate:
        return EXIT_AUDIT
    return EXIT_OK


# ---------------------------------------------------------------------------
# evolve


def build_evolution_config(args) -> evolution.EvolutionConfig:
    base = evolution.EvolutionConfig().to_dict()
    if args.config:
        base = _deep_merge(base, _load_json(args.config))
    flags = {"interneurons": args.interneurons, "generations": args.generations,
             "population_size": args.population, "seed": args.seed}
    for k, v in flags.items():
        if v is not None:
            base[k] = v
    if args.variant is not None:
        base["shaping"]["variant"] = VARIANT_FLAGS[args.variant]
    if args.no_shaping:
        base["shaping"]["enabled"] = False
    try:
        return evolution.EvolutionConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid evolution config: {exc}") from exc


def cmd_evolve(args) -> int:
    cfg = build_evolution_config(args)
    out = Path(args.out) if args.out else output_dir() / f"run-seed{cfg.seed}"
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    threads = args.threads or os.cpu_count() or 1
    every = args.checkpoint_every

    def progress(rec):
        if rec["gen"] % max(1, args.report_every) == 0:
            log.info("gen %d best %.3f mean %.3f", rec["gen"], rec["best"], rec["mean"])

    try:
        result = evolution.run_evolution(cfg, threads=threads, log_path=out / "run.jsonl",
                                         checkpoint_path=out / "checkpoint.json", checkpoint_every=every,
                                         resume=args.resume, on_generation=progress)
    except evolution.CheckpointError as exc:
        raise UsageError(str(exc)) from exc
    save_genome(out / "best_genome.json", result.best_genome)
    with open(out / "result.json", "w") as fh:
        json.dump(evolution.result_to_dict(result), fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"best fitness {result.best_fitness:.4f} ({100 * result.best_fitness / 200:.2f}%); outputs in {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# agent


def _load_genome(path):
    try:
        return load_genome(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{path}: not a genome file ({exc})") from exc


def _load_corpus(path):
    try:
        return trials.read_corpus(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_agent_eval(args) -> int:
    genome = _load_genome(args.genome)
    if args.interneurons is not None and args.interneurons != genome.architecture.n_interneurons:
        raise UsageError(f"genome has {genome.architecture.n_interneurons} interneurons, "
                         f"--interneurons says {args.interneurons}")
    corpus = _load_corpus(args.corpus)
    if args.labels:
        ids, labels, _ = trials.read_labels(args.labels)
        if [str(i) for i in ids] != [str(i) for i in corpus.ids]:
            raise UsageError("label file does not match the corpus trial ids")
        cfg = trials.TrialConfig()
    else:
        cfg = trials.TrialConfig.from_dict(corpus.header.get("generator", trials.TrialConfig().to_dict()))
        labels = trials.classify_many(corpus.trials, cfg)
    results = analysis.batch_evaluate(genome, corpus, cfg.world, threads=args.threads or os.cpu_count() or 1)
    report = analysis.category_report(results, labels, corpus.ids)
    meta = {"genome": str(args.genome), "corpus": str(args.corpus), "trials": len(corpus),
            "corpus_seed": corpus.header.get("seed"), "world": cfg.to_dict()["world"],
            "architecture": genome.architecture.to_dict()}
    analysis.write_jsonl(_out_path(args.out, "report.jsonl"), analysis.report_records(report, meta))
    print(analysis.format_report(report))
    return EXIT_OK


def _parse_trial(text: str) -> trials.Trial:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise UsageError("--trial expects 8 comma-separated numbers") from exc
    if len(vals) != 8:
        raise UsageError("--trial expects 8 comma-separated numbers")
    return trials.Trial.from_array(vals, id="cli")


def cmd_agent_trace(args) -> int:
    genome = _load_genome(args.genome)
    if args.trial:
        trial = _parse_trial(args.trial)
    else:
        if not (args.corpus and args.trial_id is not None):
            raise UsageError("trace needs --trial, or --corpus with --trial-id")
        corpus = _load_corpus(args.corpus)
        try:
            trial = corpus[corpus.index_of(int(args.trial_id) if args.trial_id.isdigit() else args.trial_id)]
        except KeyError as exc:
            raise UsageError(str(exc)) from exc
    world = trials.TrialConfig().world
    arr = trial.as_array()
    if args.mirror:
        arr = mirror_trial_array(arr, world)
    result = run_trial(decode(genome), arr, world, record_trace=True)
    out = _out_path(args.out, "trace.csv")
    write_trace_csv(out, result, world)
    meta = {"schema": "selattn.trace/1", "genome": str(args.genome), "trial_id": trial.id,
            "trial": [float(v) for v in arr], "mirrored": bool(args.mirror), "columns": trace_header(world),
            "steps": result.steps, "score": result.score, "landing_offsets": list(result.landing_offsets),
            "architecture": genome.architecture.to_dict(), "provenance": genome.provenance}
    with open(f"{out}.meta.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"{result.steps} steps, score {result.score:.4f}; trace in {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="selattn", description="Selective-attention catching agents: trials, evolution, analysis.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="log progress to stderr")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    pt = sub.add_parser("trials", help="generate or classify trial corpora")
    tsub = pt.add_subparsers(dest="action", required=True, parser_class=_Parser)
    g = tsub.add_parser("gen", parents=[common], help="generate a seeded random corpus")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", help="corpus path (default: $SELATTN_OUTPUT_DIR/corpus.jsonl)")
    g.add_argument("--config", help="JSON trial-generator overrides")
    g.set_defaults(func=cmd_trials_gen)
    c = tsub.add_parser("classify", parents=[common], help="label a corpus and run the frequency audit")
    c.add_argument("--in", dest="input", required=True, help="corpus file")
    c.add_argument("--out", help="label file (default: $SELATTN_OUTPUT_DIR/labels.jsonl)")
    c.add_argument("--audit-out", help="audit JSONL (default: $SELATTN_OUTPUT_DIR/audit.jsonl)")
    c.add_argument("--config", help="JSON classifier overrides (default: the corpus header)")
    c.add_argument("--no-gate", action="store_true", help="exit 0 even when the audit fails")
    c.set_defaults(func=cmd_trials_classify)

    e = sub.add_parser("evolve", parents=[common], help="run the shaping genetic algorithm")
    e.add_argument("--interneurons", type=int)
    e.add_argument("--generations", type=int)
    e.add_argument("--population", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--variant", choices=sorted(VARIANT_FLAGS))
    e.add_argument("--no-shaping", action="store_true", help="keep the initial pool fixed")
    e.add_argument("--threads", type=int, help="evaluation threads (default: all cores); never changes results")
    e.add_argument("--out", help="run directory (default: $SELATTN_OUTPUT_DIR/run-seed<seed>)")
    e.add_argument("--checkpoint-every", type=int, default=100)
    e.add_argument("--resume", action="store_true", help="continue from <out>/checkpoint.json")
    e.add_argument("--config", help="JSON evolution config; flags override it")
    e.add_argument("--report-every", type=int, default=50)
    e.set_defaults(func=cmd_evolve)

    pa = sub.add_parser("agent", help="evaluate or trace an evolved genome")
    asub = pa.add_subparsers(dest="action", required=True, parser_class=_Parser)
    ev = asub.add_parser("eval", parents=[common], help="per-category performance report")
    ev.add_argument("--genome", required=True)
    ev.add_argument("--corpus", required=True)
    ev.add_argument("--labels", help="label file (default: classify the corpus)")
    ev.add_argument("--interneurons", type=int, help="assert the genome architecture")
    ev.add_argument("--threads", type=int)
    ev.add_argument("--out", help="report JSONL (default: $SELATTN_OUTPUT_DIR/report.jsonl)")
    ev.set_defaults(func=cmd_agent_eval)
    tr = asub.add_parser("trace", parents=[common], help="per-step trajectory CSV for one trial")
    tr.add_argument("--genome", required=True)
    tr.add_argument("--corpus")
    tr.add_argument("--trial-id")
    tr.add_argument("--trial", help="x0,y0,vx,vy,x0,y0,vx,vy")
    tr.add_argument("--mirror", action="store_true", help="reflect the trial about the centre")
    tr.add_argument("--out", help="CSV path (default: $SELATTN_OUTPUT_DIR/trace.csv)")
    tr.set_defaults(func=cmd_agent_trace)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"selattn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"selattn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
