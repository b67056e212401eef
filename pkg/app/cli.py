"""
Command-line entry point.

    dicoh prepare  RAW [--acts FILE]
    dicoh perturb  CORPUS_DIR --domain {uo,ui,ur,euo}
    dicoh train    PAIRS_DIR [--regime R] [--seeds N]
    dicoh eval     PAIRS_FILE... --checkpoint CKPT [--checkpoint CKPT ...] [--baselines]
    dicoh score    CORPUS_FILE --checkpoint CKPT
    dicoh inspect  CORPUS_FILE --checkpoint CKPT [--dialogue ID]

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
import argparse
import json
import os
import sys
from typing import List, Optional

from config.config import DATA_ROOT, PROBLEM_DOMAINS, REGIMES, load_run_config, presets
from pipeline.pipeline import CoherencePipeline
from utils.custom_exception import ConfigurationError, CustomException, UsageError
from utils.logger import enable_console, get_logger

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value run configuration file")
    common.add_argument("--preset", choices=sorted(presets), help="hyperparameter preset")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory (default: a fresh run directory)")
    common.add_argument("--embeddings", help="pretrained word vector file")
    common.add_argument("--verbose", "-v", action="store_true", help="echo INFO logs to stderr")
    return common


def _model_flags() -> argparse.ArgumentParser:
    flags = argparse.ArgumentParser(add_help=False)
    flags.add_argument("--checkpoint", action="append", required=True, dest="checkpoints",
                       help="checkpoint archive; repeat for a cross-domain or multi-seed grid")
    flags.add_argument("--vocab", help="vocabulary file that must match the checkpoint")
    return flags


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dicoh", description="Dialogue coherence with dialogue-act multi-task learning")
    verbs = parser.add_subparsers(dest="command", required=True)
    common, model = _common_flags(), _model_flags()

    prepare = verbs.add_parser("prepare", parents=[common], help="canonical corpus files and statistics")
    prepare.add_argument("raw", nargs="?", default=os.path.join(DATA_ROOT, "dailydialog"),
                         help="DailyDialog directory, dialogues text file or canonical .jsonl")
    prepare.add_argument("--acts", help="dialogue-act file accompanying a raw text file")

    perturb = verbs.add_parser("perturb", parents=[common], help="pair datasets of one problem domain")
    perturb.add_argument("corpus", nargs="?", default=os.path.join(DATA_ROOT, "processed"),
                         help="directory holding train/validation/test.jsonl")
    perturb.add_argument("--domain", required=True, help=f"one of {', '.join(PROBLEM_DOMAINS)}")
    perturb.add_argument("--per-dialogue", type=int, dest="per_dialogue")

    train = verbs.add_parser("train", parents=[common], help="train and keep the best validation checkpoint")
    train.add_argument("pairs", help="directory holding train/validation[/test].jsonl pair files")
    train.add_argument("--regime", choices=REGIMES)
    train.add_argument("--epochs", type=int)
    train.add_argument("--batch-size", type=int, dest="batch_size")
    train.add_argument("--lr", type=float, dest="learning_rate")
    train.add_argument("--seeds", type=int, default=1, help="train seed, seed+1, ... and report mean +- std")

    evaluate = verbs.add_parser("eval", parents=[common], help="evaluate checkpoints on pair files")
    evaluate.add_argument("pair_files", nargs="+")
    evaluate.add_argument("--checkpoint", action="append", default=[], dest="checkpoints")
    evaluate.add_argument("--vocab")
    evaluate.add_argument("--baselines", action="store_true", help="add Random and CoSim rows")

    score = verbs.add_parser("score", parents=[common, model], help="score every dialogue of a corpus file")
    score.add_argument("corpus_file")

    inspect = verbs.add_parser("inspect", parents=[common, model], help="dump attention weights")
    inspect.add_argument("corpus_file")
    inspect.add_argument("--dialogue", help="dialogue id (default: every dialogue of the file)")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    keys = ("preset", "seed", "embeddings", "regime", "epochs", "batch_size", "learning_rate", "per_dialogue")
    return {key: getattr(args, key, None) for key in keys}


def run(args: argparse.Namespace) -> None:
    pipeline = CoherencePipeline(load_run_config(args.config, _overrides(args)))

    if args.command == "prepare":
        paths = pipeline.prepare(args.raw, act_path=args.acts, out=args.out)
        print(json.dumps(paths, indent=2))
    elif args.command == "perturb":
        manifest = pipeline.perturb(args.corpus, args.domain, out=args.out)
        for name, split in manifest["splits"].items():
            print(f"{name}: {split['pairs']} pairs, {split['skipped']} dialogues skipped")
    elif args.command == "train":
        summary = pipeline.train(args.pairs, seeds=args.seeds, out=args.out)
        for result in summary["runs"]:
            print(f"seed {result['seed']}: best epoch {result['best_epoch']} "
                  f"val {result['best_metric']:.4f} -> {result['checkpoint']}")
        if "test_summary" in summary:
            print(f"test: {summary['test_summary']['formatted']}")
    elif args.command == "eval":
        table = pipeline.evaluate(args.checkpoints, args.pair_files, baselines=args.baselines,
                                  vocab_path=args.vocab, out=args.out)
        print(table.to_string())
    elif args.command == "score":
        print(pipeline.score(_single(args.checkpoints), args.corpus_file, vocab_path=args.vocab, out=args.out))
    elif args.command == "inspect":
        records = pipeline.inspect(_single(args.checkpoints), args.corpus_file, dialogue_id=args.dialogue,
                                   vocab_path=args.vocab, out=args.out)
        for record in records:
            print(json.dumps(record, ensure_ascii=False))


def _single(checkpoints: List[str]) -> str:
    if len(checkpoints) != 1:
        raise UsageError(f"expected exactly one --checkpoint, got {len(checkpoints)}")
    return checkpoints[0]


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    enable_console(args.verbose)
    try:
        run(args)
        return EXIT_OK
    except (UsageError, ConfigurationError) as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except CustomException as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
