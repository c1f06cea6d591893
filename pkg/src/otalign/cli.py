"""Command-line driver: ``otalign {align,synth,eval}``.

Exit status is 0 on success, 1 on usage errors and 2 on data errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile

import numpy as np

from otalign.config import PUBLISHED_DEFAULTS, PipelineConfig
from otalign.embedding import load_embeddings, save_embeddings
from otalign.evaluation import evaluate
from otalign.kg import KgFormatError, load_kg_pair, load_pairs, save_pairs
from otalign.synth import SynthSpec, generate_synthetic_pair, write_dataset

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

log = logging.getLogger("otalign")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _published(name, fallback=None):
    value = PUBLISHED_DEFAULTS.get(name, fallback)
    return f" (published default: {value})" if value is not None else ""


def _theta(text):
    if text == "auto":
        return None
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("theta must be positive or 'auto'")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="otalign", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    al = sub.add_parser("align", help="train, pseudo-label and evaluate on a KG pair")
    al.add_argument("--triplets1", required=True, help="G1 triplet file")
    al.add_argument("--triplets2", required=True, help="G2 triplet file")
    al.add_argument("--features", required=True, help="entity feature file")
    al.add_argument("--seeds", default="none",
                    help="prior seed pairs file, or 'none' for a cold start")
    al.add_argument("--test", default=None, help="held-out pairs to evaluate on")
    al.add_argument("--dim", type=int, default=300, help="feature dimension" + _published("dim"))
    al.add_argument("--lambda", dest="lam", type=float, default=10.0,
                    help="rectification weight" + _published("lam"))
    al.add_argument("--theta", type=_theta, default=4.0,
                    help="candidate distance threshold, or 'auto' to calibrate" + _published("theta"))
    al.add_argument("--w", type=float, default=0.25,
                    help="reliability lower-bound control" + _published("w"))
    al.add_argument("--gamma", type=float, default=1.0, help="hinge margin" + _published("gamma"))
    al.add_argument("--k-neg", type=int, default=125,
                    help="negatives per positive" + _published("k_neg"))
    al.add_argument("--batch", type=int, default=256, help="batch size" + _published("batch_size"))
    al.add_argument("--epochs", type=int, default=80, help="total epochs" + _published("epochs"))
    al.add_argument("--outer-iters", type=int, default=8,
                    help="train/relabel alternations (default: 8)")
    al.add_argument("--relabel-period", type=int, default=None,
                    help="epochs between relabels (default: epochs / outer-iters)")
    al.add_argument("--lr", type=float, default=0.001,
                    help="Adam learning rate" + _published("learning_rate"))
    al.add_argument("--matcher", choices=("ot", "naive"), default="ot",
                    help="pseudo-label matcher (default: ot)")
    al.add_argument("--rng-seed", type=int, default=0, help="seed for all randomness")
    al.add_argument("--workers", type=int, default=1, help="threads for distance kernels")
    al.add_argument("--out", required=True, help="output directory")

    sy = sub.add_parser("synth", help="write a synthetic KG pair with ground truth")
    d = SynthSpec()
    sy.add_argument("--out", required=True)
    sy.add_argument("--entities", type=int, default=d.entities)
    sy.add_argument("--relations", type=int, default=d.relations)
    sy.add_argument("--triplets", type=int, default=d.triplets)
    sy.add_argument("--dim", type=int, default=d.dim)
    sy.add_argument("--noise", type=float, default=d.noise)
    sy.add_argument("--drop", type=float, default=d.drop)
    sy.add_argument("--seed-fraction", type=float, default=d.seed_fraction)
    sy.add_argument("--rng-seed", type=int, default=d.rng_seed)

    ev = sub.add_parser("eval", help="Hit@k and MRR of saved embeddings")
    ev.add_argument("--embeddings", required=True)
    ev.add_argument("--test", required=True)
    ev.add_argument("--n1", type=int, default=None,
                    help="number of G1 entities (default: read from the file header)")
    ev.add_argument("--workers", type=int, default=1)
    return parser


def _infer_alignment(emb, n1, prior, workers):
    from otalign import kernels

    n2 = emb.shape[0] - n1
    used1 = np.zeros(n1, dtype=bool)
    used2 = np.zeros(n2, dtype=bool)
    for i, j in prior:
        used1[i] = used2[j] = True
    u1, u2 = np.flatnonzero(~used1), np.flatnonzero(~used2)
    pairs = list(prior)
    if u1.size and u2.size:
        nearest = kernels.l1_cdist(emb[u1], emb[n1 + u2], workers).argmin(axis=1)
        pairs += [(int(i), int(u2[b])) for i, b in zip(u1, nearest)]
    return sorted(pairs)


def cmd_align(args) -> int:
    from otalign.training import run_pipeline

    for path in (args.triplets1, args.triplets2, args.features):
        if not os.path.exists(path):
            raise FileNotFoundError(f"no such file: {path}")
    kg = load_kg_pair(args.triplets1, args.triplets2, args.features)
    if kg.dim != args.dim:
        raise KgFormatError(f"{args.features}: feature dimension {kg.dim} != --dim {args.dim}")
    seeds = [] if args.seeds.lower() == "none" else load_pairs(args.seeds, kg)
    test = load_pairs(args.test, kg) if args.test else None
    if args.test and not test:
        raise KgFormatError(f"{args.test}: no test pairs")
    try:
        config = PipelineConfig(
            dim=args.dim, lam=args.lam, theta=args.theta, w=args.w, gamma=args.gamma,
            k_neg=args.k_neg, batch_size=args.batch, epochs=args.epochs,
            outer_iterations=args.outer_iters, relabel_period=args.relabel_period,
            learning_rate=args.lr, rng_seed=args.rng_seed, workers=args.workers,
            matcher=args.matcher,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = run_pipeline(kg, seeds, config, test_pairs=test)
    report = evaluate(result.embeddings, test, kg.n1, n_threads=args.workers) if test else None

    os.makedirs(args.out, exist_ok=True)
    staging = tempfile.mkdtemp(prefix=".staging-", dir=args.out)
    try:
        save_embeddings(result.embeddings, os.path.join(staging, "embeddings.txt"), kg.n1)
        save_pairs(_infer_alignment(result.embeddings, kg.n1, seeds, args.workers),
                   os.path.join(staging, "alignment.tsv"))
        with open(os.path.join(staging, "pseudo_labels.tsv"), "w", encoding="utf-8") as fh:
            for (i, j), r in sorted(result.alignment.pseudo.items()):
                fh.write(f"{i}\t{j}\t{r!r}\n")
        with open(os.path.join(staging, "history.jsonl"), "w", encoding="utf-8") as fh:
            for entry in result.history:
                fh.write(json.dumps(entry) + "\n")
        if report is not None:
            with open(os.path.join(staging, "report.json"), "w", encoding="utf-8") as fh:
                fh.write(report.to_json() + "\n")
        for name in sorted(os.listdir(staging)):
            os.replace(os.path.join(staging, name), os.path.join(args.out, name))
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    if report is not None:
        print(report.format())
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        spec = SynthSpec(args.entities, args.relations, args.triplets, args.dim, args.noise,
                         args.drop, args.seed_fraction, args.rng_seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    paths = write_dataset(generate_synthetic_pair(spec), args.out)
    for key in sorted(paths):
        print(f"{key}\t{paths[key]}")
    return EXIT_OK


def cmd_eval(args) -> int:
    emb, n1 = load_embeddings(args.embeddings)
    n1 = args.n1 if args.n1 is not None else n1
    if n1 is None:
        raise UsageError("embedding file has no n1 header; pass --n1")
    test = load_pairs(args.test)
    if not test:
        raise KgFormatError(f"{args.test}: no test pairs")
    try:
        report = evaluate(emb, test, n1, n_threads=args.workers)
    except ValueError as exc:
        raise KgFormatError(str(exc)) from None
    print(report.format())
    return EXIT_OK


COMMANDS = {"align": cmd_align, "synth": cmd_synth, "eval": cmd_eval}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"otalign: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KgFormatError, ValueError, OSError) as exc:
        print(f"otalign: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
