"""Command-line interface: ``hggan <subcommand> [options]``.

Exit codes: 0 on success, 2 for invalid input or configuration, 3 when a
numerical computation fails (divergence, overflow, non-terminating walks).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .construct import dhc_construct, ohgh_consensus
from .dataio import SynthConfig, load_manifest, read_matrix, save_manifest, synth_cohort, write_matrix
from .errors import HgganError, InputError, NumericError, ValidationError
from .evaluate import classify_repeated, region_ranking
from .hgcore import read_hypergraph, write_hypergraph
from .pipeline import PipelineConfig, build_hypergraphs, generate, load_checkpoint, save_checkpoint
from .report import connectivity_svg, emit_report
from .walk import (
    DEFAULT_CAP,
    empirical_distribution,
    endpoint_distributions_exact,
    sample_walks,
    transition_matrix,
    tv_distance,
)
from .adversary import subject_inputs, train

log = logging.getLogger("hggan")

WALK_CHECK_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["start", "exact_distribution", "sampled_distribution", "tv_distance", "samples"],
    "additionalProperties": False,
    "properties": {
        "start": {"type": "integer", "minimum": 0},
        "exact_distribution": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "sampled_distribution": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "tv_distance": {"type": "number", "minimum": 0, "maximum": 1},
        "samples": {"type": "integer", "minimum": 1},
    },
}

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_OTHER = 0, 2, 3, 1


# -- shared helpers ---------------------------------------------------------

def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    return cfg.with_seed(args.seed) if args.seed is not None else cfg


def _records(args):
    if not args.manifest:
        raise InputError(f"{args.command} needs --manifest")
    return load_manifest(args.manifest)


def _out(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _checkpoint(args):
    if not args.checkpoint:
        raise InputError(f"{args.command} needs --checkpoint")
    return load_checkpoint(args.checkpoint)


def _generated(args, records):
    """Fused M and node correlation Co for each record from a trained checkpoint."""
    gp, _, index = _checkpoint(args)
    cfg = PipelineConfig.from_dict(index.get("config", {}))
    base = Path(args.checkpoint)
    base = base if base.is_dir() else base.parent
    consensus = read_hypergraph(base / index["consensus"])
    cohort = build_hypergraphs(records, cfg.dhc)
    subjects = subject_inputs(records, consensus, cohort, cfg.generator.zscore_bold)
    return generate(gp, subjects)


def _emit_json(obj) -> None:
    print(json.dumps(obj, indent=2))


# -- subcommands ------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = SynthConfig(n=args.n, d=args.d, subjects_per_group=args.subjects_per_group,
                      group_effect=args.group_effect, seed=args.seed or 0)
    path = save_manifest(synth_cohort(cfg), _out(args), fmt=args.format)
    _emit_json({"manifest": str(path)})
    return EXIT_OK


def cmd_construct(args) -> int:
    records = _records(args)
    cfg = _config(args)
    out = _out(args) / "hypergraphs"
    out.mkdir(exist_ok=True)
    for r in records:
        write_hypergraph(dhc_construct(r.bold, cfg.dhc), out / f"{r.id}.txt")
    _emit_json({"hypergraphs": len(records), "directory": str(out)})
    return EXIT_OK


def cmd_consensus(args) -> int:
    cfg = _config(args)
    if args.hypergraphs:
        cohort = [read_hypergraph(p) for p in args.hypergraphs]
    else:
        cohort = build_hypergraphs(_records(args), cfg.dhc)
    result = ohgh_consensus(cohort, cfg.ohgh)
    out = _out(args)
    write_hypergraph(result.hypergraph, out / "consensus.txt")
    sidecar = {"score": result.score, "iterations": result.iterations, "seed": result.seed}
    (out / "consensus.json").write_text(json.dumps(sidecar, indent=2))
    _emit_json(sidecar)
    return EXIT_OK


def cmd_train(args) -> int:
    records = _records(args)
    cfg = _config(args)
    if args.epochs is not None:
        cfg = replace(cfg, train=replace(cfg.train, epochs=args.epochs))
    cohort = build_hypergraphs(records, cfg.dhc)
    consensus = ohgh_consensus(cohort, cfg.ohgh)
    subjects = subject_inputs(records, consensus.hypergraph, cohort, cfg.generator.zscore_bold)
    gp, dp, history = train(subjects, cfg.generator, cfg.discriminator, cfg.train)

    out = _out(args)
    ckpt = out / "checkpoint"
    ckpt.mkdir(exist_ok=True)
    write_hypergraph(consensus.hypergraph, ckpt / "consensus.txt")
    save_checkpoint(ckpt, gp, dp, {
        "consensus": "consensus.txt",
        "config": cfg.to_dict(),
        "initial_tv": history.initial_tv,
    })
    with open(out / "history.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "d_objective", "g_objective", "tv"])
        w.writeheader()
        w.writerows(history.rows())
    _emit_json({
        "checkpoint": str(ckpt / "index.json"),
        "epochs": len(history),
        "initial_tv": history.initial_tv,
        "final_tv": history.tv[-1] if history.tv else history.initial_tv,
    })
    return EXIT_OK


def cmd_generate(args) -> int:
    records = _records(args)
    ms, cos = _generated(args, records)
    out = _out(args) / "generated"
    out.mkdir(exist_ok=True)
    for r, m, co in zip(records, ms, cos):
        for ext in ("bin", "csv"):
            write_matrix(out / f"{r.id}_M.{ext}", m, kind="MC")
            write_matrix(out / f"{r.id}_Co.{ext}", co[None, :], kind="CO")
    _emit_json({"subjects": len(records), "directory": str(out)})
    return EXIT_OK


def walk_check(c, start: int, samples: int, seed: int, cap: int = DEFAULT_CAP) -> dict:
    p = transition_matrix(c)
    if not 0 <= start < p.shape[0]:
        raise InputError(f"start node {start} out of range 0..{p.shape[0] - 1}")
    if samples < 1:
        raise InputError("samples must be positive")
    exact = endpoint_distributions_exact(p, [start])[0]
    batch = sample_walks(p, np.full(samples, start), seed=seed, cap=cap)
    sampled = empirical_distribution(batch, p.shape[0])
    return {
        "start": int(start),
        "exact_distribution": [float(x) for x in np.clip(exact, 0.0, 1.0)],
        "sampled_distribution": [float(x) for x in sampled],
        "tv_distance": tv_distance(exact, sampled),
        "samples": int(samples),
    }


def cmd_walk_check(args) -> int:
    result = walk_check(read_matrix(args.matrix), args.start, args.samples, args.seed or 0, args.cap)
    if args.out_dir != ".":
        (_out(args) / "walk_check.json").write_text(json.dumps(result, indent=2))
    _emit_json(result)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    records = _records(args)
    groups = [r.group for r in records]
    if args.kind == "sc":
        mats = [r.sc for r in records]
    elif args.kind == "fc":
        mats = [r.fc for r in records]
    else:
        mats = _generated(args, records)[0]
    base = args.seed or 0
    reports, mean = classify_repeated(mats, groups, args.kind, seeds=range(base, base + args.repeats),
                                      normalize=args.normalize)
    out = _out(args)
    emit_report(reports, out / f"eval_{args.kind}.json")
    emit_report(reports, out / f"eval_{args.kind}.csv")
    _emit_json({"kind": args.kind.upper(), "repeats": args.repeats, **mean})
    return EXIT_OK


def _ranking(args, records):
    ms, cos = _generated(args, records)
    ranking = region_ranking(cos, [r.group for r in records], args.k)
    return ranking, np.mean(ms, axis=0)


def cmd_rank(args) -> int:
    records = _records(args)
    ranking, _ = _ranking(args, records)
    out = _out(args)
    emit_report(ranking, out / "ranking.json")
    emit_report(ranking, out / "ranking.csv")
    _emit_json({"groups": list(ranking.groups), "top_k": ranking.top_k})
    return EXIT_OK


def cmd_plot(args) -> int:
    out = _out(args)
    if args.matrix:
        matrix = read_matrix(args.matrix)
        if args.ranking:
            highlight = json.loads(Path(args.ranking).read_text())["top_k"]
        else:
            strength = np.abs(matrix).sum(axis=1) - np.abs(np.diag(matrix))
            highlight = np.lexsort((np.arange(len(strength)), -strength))[: args.k].tolist()
        path = out / "connectivity.svg"
        path.write_text(connectivity_svg(matrix, highlight))
    else:
        ranking, mean_m = _ranking(args, _records(args))
        path = emit_report(ranking, out / "ranking.svg", matrix=mean_m)
    _emit_json({"svg": str(path)})
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    # subcommands repeat the global flags with suppressed defaults so either position works
    def default(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--seed", type=int, default=default(None), help="seed for every stochastic step")
    parser.add_argument("--manifest", default=default(None), help="dataset manifest JSON")
    parser.add_argument("--out-dir", default=default("."), help="directory for output files")
    parser.add_argument("--config", default=default(None),
                        help="JSON file with dhc/ohgh/generator/discriminator/train sections")
    parser.add_argument("-v", "--verbose", action="store_true", default=default(False))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    parser = argparse.ArgumentParser(prog="hggan", description="Hypergraph connectivity generation toolkit.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic two-group cohort")
    p.add_argument("--n", type=int, default=12)
    p.add_argument("--d", type=int, default=130)
    p.add_argument("--subjects-per-group", type=int, default=20)
    p.add_argument("--group-effect", type=float, default=0.5)
    p.add_argument("--format", choices=("bin", "csv"), default="bin")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("construct", parents=[common], help="time series -> per-subject hypergraphs")
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("consensus", parents=[common], help="consensus hypergraph of a cohort")
    p.add_argument("--hypergraphs", nargs="+", help="hypergraph text files (default: construct from --manifest)")
    p.set_defaults(func=cmd_consensus)

    p = sub.add_parser("train", parents=[common], help="adversarial training; writes checkpoint and history")
    p.add_argument("--epochs", type=int, default=None, help="override train.epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", parents=[common], help="checkpoint -> M and Co files")
    p.add_argument("--checkpoint", help="checkpoint directory or its index.json")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("walk-check", parents=[common], help="exact vs sampled endpoint distribution")
    p.add_argument("--matrix", required=True)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.set_defaults(func=cmd_walk_check)

    p = sub.add_parser("evaluate", parents=[common], help="MLP classification on SC, FC or MC")
    p.add_argument("--kind", choices=("sc", "fc", "mc"), required=True)
    p.add_argument("--checkpoint", help="needed for --kind mc")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--normalize", choices=("fro", "none"), default="fro")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rank", parents=[common], help="top-k nodes by group difference in Co")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("plot", parents=[common], help="SVG connectivity plot with highlighted nodes")
    p.add_argument("--matrix", help="matrix file to draw (default: mean generated M)")
    p.add_argument("--ranking", help="ranking JSON whose top_k nodes are highlighted")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except HgganError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
