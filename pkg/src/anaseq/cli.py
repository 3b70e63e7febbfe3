"""Command-line entry points.

    anaseq convert   annotated XML -> cleaned corpus JSON
    anaseq clean     re-clean an existing corpus directory
    anaseq split     document-level train/test split
    anaseq synth     generate a synthetic corpus + lookup tables + config
    anaseq train     fit one variant, write checkpoint and training log
    anaseq evaluate  run the model/variant matrix (or score a checkpoint)
    anaseq predict   rank antecedents for one marked-up document
    anaseq report    tabulate metric reports
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from . import __version__
from .candidates import build_query_instance, morph_to_obj
from .config import ConfigError, RunConfig, load_run_config
from .corpus import (CleaningStats, CorpusError, clean_corpus, convert_xml,
                     document_from_obj, load_corpus, save_corpus,
                     split_documents)
from .encoding import VARIANTS, VariantFlags, assemble
from .evaluation import (build_report, error_records, evaluate_examples,
                         prepare_examples, rank_example, read_report,
                         run_experiment, train_variant, write_error_analysis,
                         write_report)
from .model import (load_checkpoint, predict, save_checkpoint,
                    write_training_log)
from .synth import SynthConfig, generate


def _fail(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)


def variant_name(flags: VariantFlags) -> str:
    for name, candidate in VARIANTS.items():
        if candidate == flags:
            return name
    return "custom"


# ---------------------------------------------------------------------------
# Corpus commands

def cmd_convert(args) -> int:
    xml_paths = sorted(Path(args.in_dir).glob("*.xml"))
    if not xml_paths:
        _fail(f"no .xml files under {args.in_dir}")
        return 2
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    totals = CleaningStats()
    failed = 0
    for path in xml_paths:
        try:
            doc = convert_xml(path.read_text(encoding="utf-8"),
                              doc_id=path.stem)
            cleaned, stats = clean_corpus(doc)
            save_corpus([cleaned], out_dir)
        except CorpusError as exc:
            _fail(f"{path.name}: {exc}")
            failed += 1
            continue
        totals = totals + stats
        print(f"{path.name}: kept {stats.kept} relations "
              f"(dangling {stats.dangling}, chains {stats.chains_collapsed}, "
              f"non-pronominal {stats.non_pronominal_dropped})")
    (out_dir / "cleaning_stats.json").write_text(
        json.dumps(totals.to_json(), indent=1) + "\n", encoding="utf-8")
    print(f"converted {len(xml_paths) - failed}/{len(xml_paths)} documents "
          f"-> {out_dir}")
    return 1 if failed else 0


def cmd_clean(args) -> int:
    docs = load_corpus(args.in_dir, strict=False)
    if not docs:
        _fail(f"no documents under {args.in_dir}")
        return 2
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    totals = CleaningStats()
    for doc in docs:
        cleaned, stats = clean_corpus(doc)
        save_corpus([cleaned], out_dir)
        totals = totals + stats
    (out_dir / "cleaning_stats.json").write_text(
        json.dumps(totals.to_json(), indent=1) + "\n", encoding="utf-8")
    print(f"cleaned {len(docs)} documents -> {out_dir}; "
          f"kept {totals.kept} relations")
    return 0


def cmd_split(args) -> int:
    docs = load_corpus(args.in_dir)
    train_docs, test_docs = split_documents(docs, args.ratio, args.seed)
    out_dir = Path(args.out_dir)
    save_corpus(train_docs, out_dir / "train")
    save_corpus(test_docs, out_dir / "test")
    manifest = {
        "ratio": args.ratio,
        "seed": args.seed,
        "train": sorted(d.doc_id for d in train_docs),
        "test": sorted(d.doc_id for d in test_docs),
    }
    (out_dir / "split.json").write_text(
        json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    print(f"split {len(docs)} documents -> "
          f"{len(train_docs)} train / {len(test_docs)} test under {out_dir}")
    return 0


def cmd_synth(args) -> int:
    config = SynthConfig(
        n_docs=args.docs,
        noun_vocab=args.nouns,
        anaphor_rate=args.anaphor_rate,
        attached_rate=args.attached_rate,
        ambiguity=args.ambiguity,
        agreement_noise=args.noise,
        seed=args.seed,
    )
    corpus = generate(config)
    out_dir = Path(args.out_dir)
    save_corpus(corpus.documents, out_dir / "corpus")
    (out_dir / "tagger.json").write_text(
        json.dumps(corpus.tagger_table, indent=1, sort_keys=True) + "\n",
        encoding="utf-8")
    (out_dir / "morph.json").write_text(
        json.dumps({surface: morph_to_obj(m)
                    for surface, m in corpus.morph_table.items()},
                   indent=1, sort_keys=True) + "\n",
        encoding="utf-8")
    quickstart = {
        "corpus_dir": "corpus",
        "out_dir": "runs",
        "provider": {"name": "hash", "dim": 32, "chunk_chars": 3,
                     "max_tokens": 256, "seed": 0},
        "taggers": [{"name": "corpus", "table": "tagger.json"}],
        "analyzer": {"name": "lookup", "table": "morph.json"},
        "training": {"learning_rate": 0.005, "batch_size": 16,
                     "max_epochs": 20, "patience": 5, "hidden": 64,
                     "seed": 0, "dev_fraction": 0.1, "variant": "mask"},
        "split": {"ratio": 0.7, "seed": 0},
        "baselines": ["knn", "logistic", "svm"],
        "variants": ["base", "append", "mask", "filter"],
    }
    (out_dir / "config.yaml").write_text(
        yaml.safe_dump(quickstart, sort_keys=False), encoding="utf-8")
    n_anaphors = sum(
        1 for doc in corpus.documents
        for _, _, word in doc.iter_words() if word.refers_to is not None)
    print(f"generated {len(corpus.documents)} documents, "
          f"{n_anaphors} anaphors -> {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# Modelling commands

def _load_config(args) -> RunConfig:
    if not args.config:
        raise ConfigError("this command needs --config")
    cfg = load_run_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.training = replace(cfg.training, seed=args.seed)
    return cfg


def cmd_train(args) -> int:
    cfg = _load_config(args)
    if args.variant:
        cfg.training = replace(cfg.training, variant=VARIANTS[args.variant])
    docs = load_corpus(cfg.corpus_dir)
    train_docs, _ = split_documents(docs, cfg.split_ratio, cfg.split_seed)
    params, log = train_variant(
        train_docs, cfg.taggers, cfg.analyzer, cfg.provider, cfg.training,
        dev_split_seed=cfg.split_seed + 1)
    name = variant_name(cfg.training.variant)
    out_dir = Path(args.out) if args.out else cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint = out_dir / f"model-{name}.npz"
    save_checkpoint(params, checkpoint, config=cfg.training,
                    provider={"name": cfg.provider.name,
                              "dim": cfg.provider.dim})
    write_training_log(log, out_dir / f"train-{name}.jsonl")
    last = log[-1]
    print(f"trained variant {name}: {len(log)} epochs, "
          f"dev loss {last['dev_loss']:.4f}, dev mrr {last['dev_mrr']:.4f}")
    print(f"checkpoint -> {checkpoint}")
    return 0


def _check_dims(params, provider) -> None:
    expected = provider.dim + 2
    if params.input_dim != expected:
        raise ConfigError(
            f"checkpoint expects input dim {params.input_dim} "
            f"(embedding dim {params.input_dim - 2}); provider "
            f"{provider.name!r} produces {expected} (embedding {provider.dim})")


def _checkpoint_variant(meta: dict, override: str | None) -> VariantFlags:
    if override:
        return VARIANTS[override]
    config = meta.get("config") or {}
    if "variant" not in config:
        raise ConfigError(
            "checkpoint records no variant; pass --variant explicitly")
    return VariantFlags.from_json(config["variant"])


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    out_dir = Path(args.out) if args.out else cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    docs = load_corpus(cfg.corpus_dir)

    if args.checkpoint:
        params, meta = load_checkpoint(args.checkpoint)
        _check_dims(params, cfg.provider)
        flags = _checkpoint_variant(meta, args.variant)
        _, test_docs = split_documents(docs, cfg.split_ratio, cfg.split_seed)
        pairs, missed = prepare_examples(
            test_docs, cfg.taggers, cfg.analyzer, cfg.provider, flags)
        ranks, counts, predictions = evaluate_examples(
            params, pairs, flags, unreachable=missed)
        report = build_report("bilstm", flags, "test", ranks, counts)
        name = variant_name(flags)
        write_report(report, out_dir / f"report-bilstm-{name}.json")
        write_error_analysis(error_records(pairs, predictions),
                             out_dir / f"errors-bilstm-{name}.jsonl")
        print(f"bilstm/{name}: mrr {report.mrr:.4f} "
              f"f1 {report.f1:.4f} acc {report.accuracy:.4f} "
              f"({report.counts['instances']} instances)")
        return 0

    result = run_experiment(
        docs, cfg.taggers, cfg.analyzer, cfg.provider, cfg.training,
        split_ratio=cfg.split_ratio, split_seed=cfg.split_seed,
        baseline_names=cfg.baselines, variants=cfg.variants)
    (out_dir / "split.json").write_text(
        json.dumps(result.split, indent=1) + "\n", encoding="utf-8")
    for report in result.reports:
        name = variant_name(report.variant)
        write_report(report, out_dir / f"report-{report.model}-{name}.json")
        print(f"{report.model}/{name}: mrr {report.mrr:.4f} "
              f"f1 {report.f1:.4f} acc {report.accuracy:.4f}")
    for cell, records in result.errors.items():
        write_error_analysis(
            records, out_dir / f"errors-{cell.replace('/', '-')}.jsonl")
    for cell, log in result.logs.items():
        write_training_log(
            log, out_dir / f"train-{cell.replace('/', '-')}.jsonl")
    for cell, params in result.checkpoints.items():
        save_checkpoint(params,
                        out_dir / f"model-{cell.replace('/', '-')}.npz",
                        config=replace(cfg.training,
                                       variant=VARIANTS[cell.split('/')[1]]),
                        provider={"name": cfg.provider.name,
                                  "dim": cfg.provider.dim})
    for failure in result.failures:
        _fail(f"cell {failure['cell']} failed: {failure['error']}")
    print(f"reports -> {out_dir}")
    return 1 if result.failures else 0


def cmd_predict(args) -> int:
    cfg = _load_config(args)
    params, meta = load_checkpoint(args.checkpoint)
    _check_dims(params, cfg.provider)
    flags = _checkpoint_variant(meta, args.variant)
    obj = json.loads(Path(args.in_path).read_text(encoding="utf-8"))
    doc = document_from_obj(obj, file=str(args.in_path))
    try:
        instance = build_query_instance(
            doc, cfg.taggers, cfg.analyzer,
            apply_agreement_filter=flags.agreement_filter)
    except ValueError as exc:
        _fail(str(exc))
        return 2
    example = assemble(instance, cfg.provider, flags)
    scores = predict(params, example, flags)
    prediction = rank_example(scores, example, flags)
    window = instance.paragraph[example.word_offset:]
    rows = [{"word": window[word].surface,
             "position": word + example.word_offset,
             "score": score}
            for word, score in zip(prediction.ranking, prediction.scores)]
    payload = json.dumps(rows, ensure_ascii=False, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
        print(f"ranked {len(rows)} words -> {args.out}")
    else:
        sys.stdout.write(payload)
    return 0


def cmd_report(args) -> int:
    paths: list[Path] = []
    for raw in args.inputs:
        path = Path(raw)
        if path.is_dir():
            paths.extend(sorted(path.glob("report-*.json")))
        else:
            paths.append(path)
    if not paths:
        _fail("no report files found")
        return 2
    rows = []
    for path in paths:
        report = read_report(path)
        rows.append((report.model, variant_name(report.variant),
                     report.split, report.mrr, report.precision,
                     report.recall, report.f1, report.accuracy,
                     report.counts.get("instances", 0)))
    header = ("model", "variant", "split", "mrr", "prec", "rec", "f1",
              "acc", "n")
    widths = [max(len(header[i]),
                  max(len(f"{row[i]:.4f}" if isinstance(row[i], float)
                          else str(row[i])) for row in rows))
              for i in range(len(header))]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for row in rows:
        cells = [f"{v:.4f}" if isinstance(v, float) else str(v)
                 for v in row]
        print("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
    return 0


# ---------------------------------------------------------------------------
# Parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anaseq",
        description="Arabic pronoun resolution as sequence scoring.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="annotated XML -> cleaned corpus")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("clean", help="re-clean a corpus directory")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("split", help="document-level train/test split")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--ratio", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--docs", type=int, default=20)
    p.add_argument("--nouns", type=int, default=24)
    p.add_argument("--anaphor-rate", type=float, default=0.6)
    p.add_argument("--attached-rate", type=float, default=0.2)
    p.add_argument("--ambiguity", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit one variant")
    p.add_argument("--config", required=True)
    p.add_argument("--variant", choices=sorted(VARIANTS))
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate",
                       help="run the experiment matrix or score a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--variant", choices=sorted(VARIANTS))
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="rank antecedents for one document")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--variant", choices=sorted(VARIANTS))
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", help="tabulate metric reports")
    p.add_argument("inputs", nargs="+",
                   help="report files or directories containing them")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        _fail(str(exc))
        return 2
    except (CorpusError, FileNotFoundError) as exc:
        _fail(str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
