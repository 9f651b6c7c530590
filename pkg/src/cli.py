"""
Command-line entry point: ``mape-workbench <command> [options]``.

Exit codes: 0 on success, 1 when the command itself fails, 2 when a grid
completed but some of its rows failed.
"""
from pathlib import Path
from typing import List, Optional, Sequence
import argparse
import json
import logging
import sys

import yaml

from .exceptions import WorkbenchError
from .settings import SettingsManager

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_ROWS_FAILED = 2

logger = logging.getLogger("mape-workbench")


def _read_tokenized(path: str) -> List[tuple]:
    from .corpus import tokenize

    with open(path, encoding="utf-8") as f:
        return [tokenize(line) for line in f.read().splitlines()]


def _write_tokenized(path: str, sentences: Sequence[Sequence[str]]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for sentence in sentences:
            f.write(" ".join(sentence) + "\n")


def _print_json(payload) -> None:
    print(json.dumps(payload, indent=2, ensure_ascii=False, default=str))


def cmd_build_synthetic(args, settings) -> int:
    from .corpus import build_synthetic_triplets, load_parallel, save_corpus
    from .translators import translator_from_settings

    pairs = load_parallel(args.src, args.ref, args.source_lang, args.target_lang)
    translator = translator_from_settings(settings, [(args.source_lang, args.target_lang)], args.seed)
    corpus = build_synthetic_triplets(pairs, translator)
    _print_json(save_corpus(corpus.with_provenance(seed=args.seed), args.out))
    return EXIT_OK


def cmd_merge(args, settings) -> int:
    from .corpus import load_corpus_dir, merge_multilingual, prefix_langid, save_corpus

    corpora = [load_corpus_dir(path) for path in args.corpus]
    merged = prefix_langid(merge_multilingual(corpora, args.seed), args.langid_mode, settings.lang_ids)
    _print_json(save_corpus(merged, args.out))
    return EXIT_OK


def _load_grouping(path: str) -> dict:
    with open(path, encoding="utf-8") as f:
        grouping = yaml.safe_load(f) or {}
    return {str(k): str(v) for k, v in grouping.items()}


def cmd_split_domains(args, settings) -> int:
    from .corpus import load_corpus_dir, save_corpus, split_by_domain

    groups = split_by_domain(load_corpus_dir(args.corpus), _load_grouping(args.grouping), args.default_group)
    _print_json({group: save_corpus(corpus, Path(args.out) / group)["total"] for group, corpus in groups.items()})
    return EXIT_OK


def cmd_augment(args, settings) -> int:
    from .augment import augment_synthetic, quadruples_per_direction
    from .corpus import load_corpus_dir, save_corpus
    from .translators import translator_from_settings

    corpus = load_corpus_dir(args.corpus)
    external = dict(pair.split(":", 1) for pair in args.external)
    directions = {(t.source_lang, external[t.target_lang]) for t in corpus if t.target_lang in external}
    translator = translator_from_settings(settings, directions, args.seed)
    quads = quadruples_per_direction(corpus, translator, args.n_per_direction, args.seed, external)
    augmented = augment_synthetic(corpus, quads, args.mode, settings.sep_token)
    _print_json(save_corpus(augmented.with_provenance(augment_seed=args.seed), args.out))
    return EXIT_OK


def cmd_evaluate(args, settings) -> int:
    from .metrics import evaluate_system

    report = evaluate_system(_read_tokenized(args.hyp), _read_tokenized(args.ref))
    _print_json(report.as_dict())
    return EXIT_OK


def cmd_significance(args, settings) -> int:
    from .metrics import sentence_stats
    from .significance import TEST_NAME, significance_test

    refs = _read_tokenized(args.ref)
    p_value = significance_test(sentence_stats(_read_tokenized(args.hyp_a), refs),
                                sentence_stats(_read_tokenized(args.hyp_b), refs),
                                trials=args.trials, seed=args.seed)
    _print_json({"test": TEST_NAME, "trials": args.trials, "seed": args.seed, "p": p_value})
    return EXIT_OK


def cmd_annotate_qe(args, settings) -> int:
    from .corpus import load_corpus_dir, save_corpus
    from .qe import annotate_corpus, read_da_table

    da_table = read_da_table(args.da) if args.da else {}
    corpus, record = annotate_corpus(load_corpus_dir(args.corpus), da_table, settings.da_range, args.scheme)
    manifest = save_corpus(corpus, args.out)
    _print_json({"total": manifest["total"], "da_available": len(da_table), "normalization": record})
    return EXIT_OK


def cmd_train(args, settings) -> int:
    from .ai.config import Stage, TrainConfig, load_train_config
    from .harness import ExperimentHarness, ExperimentSpec

    overrides = {"mode": args.mode} if args.mode else {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.config:
        config = load_train_config(args.config, **overrides)
    else:
        config = TrainConfig.for_profile(args.profile, **overrides)
    spec = ExperimentSpec(system=args.system, corpora=Path(args.corpora), pairs=args.pairs, seed=config.seed)
    harness = ExperimentHarness(args.out, progress=sys.stderr.isatty())
    data, _ = harness.cts_data(spec, spec.pairs)
    trainer = harness.make_trainer(spec, Path(args.out), config=config)

    if args.stage is None:
        result = trainer.run_cts(data, resume=args.resume)
        _print_json({"checkpoint": result.checkpoint, "domain_checkpoints": result.domain_checkpoints})
        return EXIT_OK

    stage = Stage(args.stage)
    if stage is Stage.NMT:
        checkpoint = trainer.train_stage1_nmt(data.parallel_train, data.parallel_dev)
    else:
        if not args.ckpt:
            raise WorkbenchError(f"Stage {stage.value} needs --ckpt")
        if stage is Stage.SYNTHETIC_PHASE1:
            checkpoint = trainer.train_synthetic_phase(Path(args.ckpt), data.phase1, data.synthetic_dev, stage)
        elif stage is Stage.SYNTHETIC_PHASE2:
            checkpoint = trainer.train_synthetic_phase(Path(args.ckpt), data.phase2, data.synthetic_dev, stage)
        else:
            checkpoint = trainer.train_stage3_finetune(Path(args.ckpt), data.authentic_train, data.authentic_dev,
                                                       grouping=data.domain_grouping,
                                                       default_group=data.default_group)
    _print_json({"checkpoint": checkpoint})
    return EXIT_OK


def cmd_decode(args, settings) -> int:
    from .ai.checkpoint import load_checkpoint
    from .ai.decoding import decode_corpus
    from .corpus import load_corpus_dir, prefix_langid

    model, vocab, _ = load_checkpoint(args.ckpt)
    corpus = prefix_langid(load_corpus_dir(args.corpus), args.langid_mode, settings.lang_ids)
    outputs = decode_corpus(model, vocab, corpus, beam=args.beam, max_len=args.max_len,
                            length_penalty=args.length_penalty, progress=sys.stderr.isatty())
    if args.out:
        _write_tokenized(args.out, outputs)
    else:
        for output in outputs:
            print(" ".join(output))
    return EXIT_OK


def cmd_report(args, settings) -> int:
    from .harness import load_grid, run_experiment_grid

    table = run_experiment_grid(load_grid(args.grid), args.out, progress=sys.stderr.isatty())
    print(table.to_text())
    return EXIT_ROWS_FAILED if not table.failed.empty else EXIT_OK


def cmd_ablate(args, settings) -> int:
    from .harness import ablate_augmentation_size, load_grid

    specs = load_grid(args.grid)
    base = next((spec for spec in specs if spec.recipe.augment is not None), None)
    if base is None:
        raise WorkbenchError(f"Grid {args.grid} has no augmented system to ablate")
    table = ablate_augmentation_size(args.sizes, base, args.out, progress=sys.stderr.isatty())
    print(table.to_text())
    return EXIT_ROWS_FAILED if not table.failed.empty else EXIT_OK


def cmd_build_toy(args, settings) -> int:
    from .toy import build_toy_corpora

    manifest = build_toy_corpora(args.out, args.seed)
    _print_json({pair: info["counts"] for pair, info in manifest["pairs"].items()})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mape-workbench", description="Multilingual APE workbench")
    parser.add_argument("--env-file", help="Optional .env file with APE_* settings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-synthetic", help="Build synthetic triplets from parallel data")
    p.add_argument("--src", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--source-lang", required=True)
    p.add_argument("--target-lang", required=True)
    p.add_argument("--seed", type=int, default=17)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_synthetic)

    p = sub.add_parser("merge", help="Merge corpora with a seeded shuffle and LangId prefixes")
    p.add_argument("--corpus", nargs="+", required=True)
    p.add_argument("--seed", type=int, default=17)
    p.add_argument("--langid-mode", choices=["none", "only-authentic", "all"], default="all")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("split-domains", help="Partition a corpus into domain groups")
    p.add_argument("--corpus", required=True)
    p.add_argument("--grouping", required=True, help="YAML map of domain to group")
    p.add_argument("--default-group")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split_domains)

    p = sub.add_parser("augment", help="Add Additional Pairs or External Candidates")
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", choices=["pairs", "candidates"], required=True)
    p.add_argument("--n-per-direction", type=int, required=True)
    p.add_argument("--external", nargs="+", required=True, metavar="TARGET:EXTERNAL")
    p.add_argument("--seed", type=int, default=17)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("evaluate", help="Corpus TER and BLEU")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("significance", help="Randomization test between two systems")
    p.add_argument("--hyp-a", required=True)
    p.add_argument("--hyp-b", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--seed", type=int, default=17)
    p.set_defaults(func=cmd_significance)

    p = sub.add_parser("annotate-qe", help="Attach word tags and DA scores")
    p.add_argument("--corpus", required=True)
    p.add_argument("--da", help="index<TAB>score file")
    p.add_argument("--scheme", choices=["identity", "zscore", "minmax"], default="identity")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_annotate_qe)

    p = sub.add_parser("train", help="Run the curriculum or one of its stages")
    p.add_argument("--corpora", required=True, help="Corpora root in the toy layout")
    p.add_argument("--system", default="w-langid")
    p.add_argument("--pairs", nargs="+", default=["en-hi", "en-mr"])
    p.add_argument("--stage", choices=["nmt", "synthetic-phase1", "synthetic-phase2", "finetune"])
    p.add_argument("--mode", choices=["single", "ls-mtl", "nash-mtl", "domain-adapt"])
    p.add_argument("--config", help="Flat KEY=value training config")
    p.add_argument("--profile", choices=["desk", "full"], default="desk")
    p.add_argument("--ckpt", help="Checkpoint to start a single stage from")
    p.add_argument("--seed", type=int)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", help="Post-edit a corpus with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-len", type=int, default=64)
    p.add_argument("--length-penalty", type=float, default=1.0)
    p.add_argument("--langid-mode", choices=["none", "only-authentic", "all"], default="all")
    p.add_argument("--out")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("report", help="Run an experiment grid")
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("ablate", help="Augmentation-size ablation")
    p.add_argument("--grid", required=True)
    p.add_argument("--sizes", type=int, nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("build-toy", help="Write the toy bilingual corpora")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=17)
    p.set_defaults(func=cmd_build_toy)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = SettingsManager(args.env_file).load()
    except WorkbenchError as e:
        print(f"Configuration error: {str(e)}", file=sys.stderr)
        return EXIT_FAILURE
    logging.basicConfig(level=getattr(logging, settings.log_level, logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, settings)
    except (WorkbenchError, ValueError) as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
