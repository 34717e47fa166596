"""Command-line entry point: `selftrain-mt <command> [flags]`."""

from __future__ import annotations

import argparse
import os
import signal
import sys
import types
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from selftrain_mt import __version__
from selftrain_mt.common import GlobalSelfTrainConfig, InputError, SelfTrainError, configure_logging, logger
from selftrain_mt.corpus.corpus_io import corpus_stats, load_corpus, load_parallel, stats_table, write_corpus
from selftrain_mt.evaluation.evaluate import EvalSet, dev_evaluator, detokenize, evaluate_checkpoint
from selftrain_mt.nmt.nmt_checkpoint import Checkpoint, average_checkpoints, last_checkpoints
from selftrain_mt.nmt.nmt_decode import translate_batch
from selftrain_mt.nmt.nmt_model import ParameterSet
from selftrain_mt.nmt.nmt_train import train
from selftrain_mt.pipeline import pipeline_service
from selftrain_mt.pipeline.pipeline_config import METHODS, ExperimentConfig
from selftrain_mt.pipeline.pipeline_manifest import RunManifest
from selftrain_mt.pipeline.pipeline_report import emit_report
from selftrain_mt.pipeline.toy_task import ToyTaskSpec, generate_toy_task
from selftrain_mt.qe.qe_confidence import ConfidenceEstimator, select_best, write_scores
from selftrain_mt.selection.fda_selection import extract_features, select
from selftrain_mt.subword.bpe import MergeTable, apply_bpe, learn_bpe
from selftrain_mt.subword.vocab import Vocabulary, build_vocab

PROG = "selftrain-mt"
# ExperimentConfig fields without a default, blank unless a config file or flag provides them
_PATH_FIELDS = (
    "parallel_source",
    "parallel_target",
    "mono_source",
    "dev_source",
    "dev_target",
    "test_source",
    "test_target",
)

Handler = Callable[[argparse.Namespace], None]


def setup_shutdown_handler(sig: int, frame: Optional[types.FrameType]) -> None:
    """Handle process termination signals."""
    signal_name = signal.Signals(sig).name
    logger.info(f"Received signal {sig} ({signal_name}), shutting down...")
    sys.exit(130 if sig == signal.SIGINT else 143)


def _write_output(lines: Sequence[str], out: Optional[str]) -> None:
    """Data products go to --out when given, to standard output otherwise."""
    if out:
        write_corpus(out, lines)
        logger.info(f"Wrote {len(lines)} lines to {out}")
    else:
        sys.stdout.write("".join(f"{line}\n" for line in lines))


def _workers(args: argparse.Namespace) -> int:
    return args.workers if args.workers is not None else GlobalSelfTrainConfig.from_env().workers


def _load_model(paths: Sequence[str]) -> ParameterSet:
    checkpoints = [Checkpoint.load(path) for path in paths]
    if len(checkpoints) == 1:
        return checkpoints[0].parameter_set()
    logger.info(f"Averaging {len(checkpoints)} checkpoints")
    return average_checkpoints(checkpoints)


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file (if any) with command-line flags layered on top."""
    overrides: Dict[str, object] = {}
    flag_fields = {
        "src": "parallel_source",
        "tgt": "parallel_target",
        "mono": "mono_source",
        "out": "output_dir",
        "n": "n",
        "m": "m",
        "decay": "decay",
        "nmax": "nmax",
        "seed": "seed",
        "method": "method",
        "num_merges": "num_merges",
        "beam": "test_beam",
    }
    for flag, field_name in flag_fields.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field_name] = value
    for flag, prefix in (("dev", "dev"), ("test", "test")):
        paths = getattr(args, flag, None)
        if paths:
            overrides[f"{prefix}_source"], overrides[f"{prefix}_target"] = paths
    if args.workers is not None:
        overrides["workers"] = args.workers
    if getattr(args, "config", None):
        return ExperimentConfig.from_file(args.config).with_overrides(**overrides)
    values: Dict[str, object] = {name: "" for name in _PATH_FIELDS}
    values["output_dir"] = GlobalSelfTrainConfig.from_env().output_dir
    values["workers"] = GlobalSelfTrainConfig.from_env().workers
    values.update(overrides)
    return ExperimentConfig(**values)  # type: ignore[arg-type]


def cmd_learn_bpe(args: argparse.Namespace) -> None:
    corpus = load_corpus(args.src) + (load_corpus(args.tgt) if args.tgt else [])
    merges = learn_bpe(corpus, args.num_merges)
    merges.save(args.out)
    logger.info(f"Learned {merges.merge_count} merges from {len(corpus)} sentences into {args.out}")


def cmd_apply_bpe(args: argparse.Namespace) -> None:
    merges = MergeTable.load(args.merges)
    _write_output([" ".join(apply_bpe(line, merges)) for line in load_corpus(args.src)], args.out)


def cmd_build_vocab(args: argparse.Namespace) -> None:
    corpus = [line for path in args.src for line in load_corpus(path)]
    vocab = build_vocab(corpus, args.max_size)
    vocab.save(args.out)
    logger.info(f"Vocabulary of {len(vocab)} entries written to {args.out}")


def cmd_train(args: argparse.Namespace) -> None:
    config = _experiment_config(args)
    merges = MergeTable.load(args.merges)
    vocab = Vocabulary.load(args.vocab)

    def encode(sentence: str) -> List[int]:
        return vocab.encode(apply_bpe(sentence, merges))

    pairs = [(encode(p.source), encode(p.target)) for p in load_parallel(args.src, args.tgt)]
    dev = load_parallel(*args.dev)
    eval_set = EvalSet([encode(p.source) for p in dev], [p.target for p in dev], vocab)
    settings = config.train_settings()
    model_config = config.model_config(len(vocab), len(vocab))
    run = train(pairs, model_config, settings, config.seed, dev_evaluator(eval_set, config.workers))

    out_dir = Path(config.output_dir)
    for checkpoint in run.checkpoints:
        checkpoint.save(out_dir / f"ckpt-{checkpoint.step:07d}.ckpt")
    final = last_checkpoints(run.checkpoints, settings.keep_last)
    metadata = {"averaged_steps": ",".join(str(c.step) for c in final)}
    Checkpoint.from_parameters(average_checkpoints(final), run.final_step, metadata).save(out_dir / "averaged.ckpt")
    logger.info(f"Saved {len(run.checkpoints)} checkpoints and their last-{len(final)} average to {out_dir}")


def cmd_translate(args: argparse.Namespace) -> None:
    merges = MergeTable.load(args.merges)
    vocab = Vocabulary.load(args.vocab)
    params = _load_model(args.checkpoint)
    sources = [vocab.encode(apply_bpe(line, merges)) for line in load_corpus(args.src)]
    hypotheses = translate_batch(sources, params, beam=args.beam, workers=_workers(args))
    _write_output(detokenize(hypotheses, vocab), args.out)


def cmd_select(args: argparse.Namespace) -> None:
    table = extract_features(load_corpus(args.test_src), args.nmax, args.decay)
    ranking = select(load_corpus(args.mono), table, args.n)
    ranking.write(args.out)
    logger.info(f"Ranking of {len(ranking)} sentences written to {args.out}")


def cmd_qe_score(args: argparse.Namespace) -> None:
    merges = MergeTable.load(args.merges)
    vocab = Vocabulary.load(args.vocab)
    params = _load_model(args.checkpoint)
    pairs = load_parallel(args.src, args.tgt)
    candidates = [
        (p.source, p.target, (vocab.encode(apply_bpe(p.source, merges)), vocab.encode(apply_bpe(p.target, merges))))
        for p in pairs
    ]
    if not candidates:
        raise InputError(f"No synthetic pairs in {args.src}")
    scored = ConfidenceEstimator(params, workers=_workers(args)).score(candidates)
    if args.m is not None:
        scored = select_best(scored, args.m)
    write_scores(scored, args.out)
    logger.info(f"Wrote {len(scored)} confidence scores to {args.out}")


def cmd_evaluate(args: argparse.Namespace) -> None:
    merges = MergeTable.load(args.merges)
    vocab = Vocabulary.load(args.vocab)
    test = load_parallel(*args.test)
    eval_set = EvalSet([vocab.encode(apply_bpe(p.source, merges)) for p in test], [p.target for p in test], vocab)
    checkpoints = [Checkpoint.load(path) for path in args.checkpoint]
    params = checkpoints[0].parameter_set() if len(checkpoints) == 1 else average_checkpoints(checkpoints)
    report = evaluate_checkpoint(params, eval_set, beam=args.beam, workers=_workers(args))
    sys.stdout.write(report.to_record(max(c.step for c in checkpoints)) + "\n")


def cmd_selftrain(args: argparse.Namespace) -> None:
    pipeline_service.run_selftrain(_experiment_config(args))


def cmd_iterate(args: argparse.Namespace) -> None:
    pipeline_service.run_iterative(_experiment_config(args))


def cmd_grid(args: argparse.Namespace) -> None:
    config = _experiment_config(args)
    manifest = pipeline_service.run_grid(config)
    emit_report([manifest], config.output_dir)


def cmd_report(args: argparse.Namespace) -> None:
    manifests = [RunManifest.load(path) for path in args.manifest]
    tsv_path, svg_path = emit_report(manifests, args.out)
    logger.info(f"Report written to {tsv_path} and {svg_path}")


def cmd_toy_data(args: argparse.Namespace) -> None:
    spec = ToyTaskSpec(
        parallel_size=args.parallel_size, mono_size=args.mono_size, seed=args.seed if args.seed is not None else 1
    )
    generate_toy_task(spec).write(args.out)


def cmd_stats(args: argparse.Namespace) -> None:
    datasets: Dict[str, List[str]] = {}
    if args.src:
        datasets["parallel (source)"] = load_corpus(args.src)
    if args.tgt:
        datasets["parallel (target)"] = load_corpus(args.tgt)
    if args.mono:
        datasets["monolingual"] = load_corpus(args.mono)
    if args.dev:
        datasets["dev (source)"] = load_corpus(args.dev[0])
    if args.test:
        datasets["test (source)"] = load_corpus(args.test[0])
    if not datasets:
        raise InputError("stats needs at least one of --src, --tgt, --mono, --dev, --test")
    sys.stdout.write(stats_table({name: corpus_stats(lines) for name, lines in datasets.items()}))


def _add_common(parser: argparse.ArgumentParser, config: bool, seed: bool, workers: bool) -> None:
    if seed:
        parser.add_argument("--seed", type=int, help="experiment seed")
    if config:
        parser.add_argument("--config", help="experiment config file (key=value lines)")
    if workers:
        parser.add_argument("--workers", type=int, help="worker threads for translation and scoring")


def _add_model_files(parser: argparse.ArgumentParser, checkpoint: bool = True) -> None:
    parser.add_argument("--merges", required=True, help="BPE merge table")
    parser.add_argument("--vocab", required=True, help="shared vocabulary")
    if checkpoint:
        parser.add_argument(
            "--checkpoint", required=True, nargs="+", help="model checkpoint; several are averaged"
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=PROG, description="Self-training toolkit for low-resource translation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", metavar="command", required=True)

    def command(
        name: str, handler: Handler, help_text: str, config: bool = False, seed: bool = False, workers: bool = False
    ) -> argparse.ArgumentParser:
        """A subcommand carrying only the shared options its handler reads."""
        sub = commands.add_parser(name, help=help_text, description=help_text)
        _add_common(sub, config=config, seed=seed, workers=workers)
        sub.set_defaults(handler=handler)
        return sub

    sub = command("learn-bpe", cmd_learn_bpe, "Learn a BPE merge table from one or two corpora.")
    sub.add_argument("--src", required=True, help="training corpus")
    sub.add_argument("--tgt", help="second corpus for a joint merge table")
    sub.add_argument("--num-merges", type=int, required=True, help="number of merge operations")
    sub.add_argument("--out", required=True, help="merge table to write")

    sub = command("apply-bpe", cmd_apply_bpe, "Segment a corpus with a merge table.")
    sub.add_argument("--src", required=True, help="corpus to segment")
    sub.add_argument("--merges", required=True, help="BPE merge table")
    sub.add_argument("--out", help="segmented corpus (standard output if omitted)")

    sub = command("build-vocab", cmd_build_vocab, "Build a vocabulary from segmented corpora.")
    sub.add_argument("--src", required=True, nargs="+", help="segmented corpora")
    sub.add_argument("--max-size", type=int, required=True, help="vocabulary size including reserved tokens")
    sub.add_argument("--out", required=True, help="vocabulary file to write")

    sub = command(
        "train", cmd_train, "Train a translation model on parallel data.", config=True, seed=True, workers=True
    )
    sub.add_argument("--src", required=True, help="parallel source corpus")
    sub.add_argument("--tgt", required=True, help="parallel target corpus")
    sub.add_argument("--dev", required=True, nargs=2, metavar=("SRC", "TGT"), help="development set")
    _add_model_files(sub, checkpoint=False)
    sub.add_argument("--out", required=True, help="directory for checkpoints")

    sub = command("translate", cmd_translate, "Translate a corpus with a trained model.", workers=True)
    sub.add_argument("--src", required=True, help="corpus to translate")
    _add_model_files(sub)
    sub.add_argument("--beam", type=int, help="beam width (greedy if omitted)")
    sub.add_argument("--out", help="translations (standard output if omitted)")

    sub = command("select", cmd_select, "Rank monolingual sentences by closeness to a test set.")
    sub.add_argument("--mono", required=True, help="monolingual corpus")
    sub.add_argument("--test-src", required=True, help="test-set source sentences")
    sub.add_argument("--n", type=int, required=True, help="number of sentences to select")
    sub.add_argument("--nmax", type=int, default=3, help="largest n-gram order")
    sub.add_argument("--decay", type=float, default=0.5, help="feature decay factor")
    sub.add_argument("--out", required=True, help="ranking file to write")

    sub = command("qe-score", cmd_qe_score, "Score synthetic pairs by model confidence.", workers=True)
    sub.add_argument("--src", required=True, help="synthetic source corpus")
    sub.add_argument("--tgt", required=True, help="synthetic target corpus")
    _add_model_files(sub)
    sub.add_argument("--m", type=int, help="keep only the m most confident pairs")
    sub.add_argument("--out", required=True, help="scores file to write")

    sub = command("evaluate", cmd_evaluate, "Corpus BLEU of a model on a test set.", workers=True)
    sub.add_argument("--test", required=True, nargs=2, metavar=("SRC", "TGT"), help="test set")
    _add_model_files(sub)
    sub.add_argument("--beam", type=int, default=5, help="beam width")

    for name, handler, help_text in (
        ("selftrain", cmd_selftrain, "Baseline plus one round of self-training."),
        ("iterate", cmd_iterate, "Baseline plus iterative self-training over the configured schedule."),
        ("grid", cmd_grid, "Baseline and every self-training variant, followed by the report."),
    ):
        sub = command(name, handler, help_text, config=True, seed=True, workers=True)
        sub.add_argument("--src", help="parallel source corpus")
        sub.add_argument("--tgt", help="parallel target corpus")
        sub.add_argument("--mono", help="monolingual source corpus")
        sub.add_argument("--dev", nargs=2, metavar=("SRC", "TGT"), help="development set")
        sub.add_argument("--test", nargs=2, metavar=("SRC", "TGT"), help="test set")
        sub.add_argument("--method", choices=METHODS, help="self-training variant")
        sub.add_argument("--n", type=int, help="sentences selected")
        sub.add_argument("--m", type=int, help="synthetic pairs kept")
        sub.add_argument("--nmax", type=int, help="largest n-gram order for selection")
        sub.add_argument("--decay", type=float, help="feature decay factor")
        sub.add_argument("--num-merges", type=int, help="number of BPE merges")
        sub.add_argument("--beam", type=int, help="beam width for test BLEU")
        sub.add_argument("--out", help="run directory")

    sub = command("report", cmd_report, "Summary table and figure from run manifests.")
    sub.add_argument("--manifest", required=True, nargs="+", help="manifest files")
    sub.add_argument("--out", required=True, help="directory for report.tsv and report.svg")

    sub = command("toy-data", cmd_toy_data, "Generate the synthetic toy task and its config.", seed=True)
    sub.add_argument("--out", required=True, help="directory to write to")
    sub.add_argument("--parallel-size", type=int, default=ToyTaskSpec().parallel_size, help="authentic pairs")
    sub.add_argument("--mono-size", type=int, default=ToyTaskSpec().mono_size, help="monolingual sentences")

    sub = command("stats", cmd_stats, "Sentence and token counts of corpora.")
    sub.add_argument("--src", help="parallel source corpus")
    sub.add_argument("--tgt", help="parallel target corpus")
    sub.add_argument("--mono", help="monolingual corpus")
    sub.add_argument("--dev", nargs=2, metavar=("SRC", "TGT"), help="development set")
    sub.add_argument("--test", nargs=2, metavar=("SRC", "TGT"), help="test set")

    return parser


def dispatch(argv: Sequence[str]) -> int:
    """Run one command; 0 on success, 1 on a runtime failure, 2 on a usage error."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    try:
        args.handler(args)
    except (SelfTrainError, OSError) as e:
        message = " ".join(str(e).split())
        logger.debug("Command failed", exc_info=True)
        print(f"{PROG}: error: {message}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    """Main entry point for the command line."""
    signal.signal(signal.SIGINT, setup_shutdown_handler)
    signal.signal(signal.SIGTERM, setup_shutdown_handler)

    global_config = GlobalSelfTrainConfig.from_env()
    configure_logging(global_config.log_level)
    logger.debug(f"Version: {__version__}")
    logger.debug(f"Python version: {sys.version}")
    logger.debug(f"Platform: {sys.platform}")
    logger.debug(f"PID: {os.getpid()}")
    logger.debug(f"Configuration keys found in environment: {', '.join(GlobalSelfTrainConfig.existing_env_vars())}")

    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
